use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use cvm_core::admin::{submit, AdminClient, AdminServer, ClientError, Frame, MsgType};
use cvm_core::cvm::Node;
use cvm_core::lang::{parse, parse_one, AstNode};
use cvm_core::runtime::NodeConfig;

fn serve() -> (Node, AdminServer, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let config = NodeConfig {
        journal_path: dir.path().join("journal.log"),
        scan_interval: Duration::from_millis(20),
    };
    let node = Node::start(config, None).unwrap();
    let server = AdminServer::bind("127.0.0.1:0", node.control().clone()).unwrap();
    (node, server, dir)
}

fn raw(server: &AdminServer) -> TcpStream {
    let s = TcpStream::connect(server.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    s
}

fn read_reply(s: &mut TcpStream) -> Frame {
    cvm_core::admin::read_frame(s).unwrap()
}

#[test]
fn define_returns_unit_result() {
    let (_n, server, _d) = serve();
    let mut s = raw(&server);
    s.write_all(&Frame::eval(&parse_one("(define x 1)").unwrap().unwrap()).encode()).unwrap();
    let reply = read_reply(&mut s);
    assert_eq!(reply.msg_type, MsgType::Result);
    assert_eq!(reply.payload, [0x05, 0, 0, 0, 0]);
}

#[test]
fn unknown_tag_gives_error_and_keeps_connection() {
    let (_n, server, _d) = serve();
    let mut s = raw(&server);
    s.write_all(&Frame::new(MsgType::Eval, vec![0x09]).encode()).unwrap();
    let reply = read_reply(&mut s);
    assert_eq!(reply.msg_type, MsgType::Error);
    assert_eq!(reply.text().unwrap(), "decode: unknown tag 0x09");
    s.write_all(&Frame::ping().encode()).unwrap();
    assert_eq!(read_reply(&mut s), Frame::pong());
}

#[test]
fn ping_pong() {
    let (_n, server, _d) = serve();
    let mut s = raw(&server);
    s.write_all(&Frame::ping().encode()).unwrap();
    let mut buf = [0u8; 8];
    s.read_exact(&mut buf).unwrap();
    assert_eq!(buf, [0x43, 0x56, 0x01, 0x05, 0, 0, 0, 0]);
}

#[test]
fn bad_magic_closes_connection() {
    let (_n, server, _d) = serve();
    let mut s = raw(&server);
    s.write_all(&[0x00, 0x00, 0x01, 0x04, 0, 0, 0, 0]).unwrap();
    let mut buf = [0u8; 1];
    assert!(matches!(s.read(&mut buf), Ok(0) | Err(_)));
}

#[test]
fn bad_version_closes_connection() {
    let (_n, server, _d) = serve();
    let mut s = raw(&server);
    s.write_all(&[0x43, 0x56, 0x02, 0x04, 0, 0, 0, 0]).unwrap();
    let mut buf = [0u8; 1];
    assert!(matches!(s.read(&mut buf), Ok(0) | Err(_)));
}

#[test]
fn submit_stops_at_first_error() {
    let (_n, server, _d) = serve();
    let before = server.stats();
    let script = parse("(boom) (define x 1)").unwrap();
    let out = submit(server.local_addr(), &script, false).unwrap();
    assert_eq!(out.len(), 1);
    assert!(out[0].result.as_ref().unwrap_err().contains("boom"));
    std::thread::sleep(Duration::from_millis(50));
    assert_eq!(server.stats().frames_in - before.frames_in, 2, "one EVAL and one BYE");
}

#[test]
fn submit_keep_going_runs_everything() {
    let (_n, server, _d) = serve();
    let script = parse("(boom) (define x 1) x").unwrap();
    let out = submit(server.local_addr(), &script, true).unwrap();
    let indices: Vec<usize> = out.iter().map(|o| o.index).collect();
    assert_eq!(indices, [0, 1, 2]);
    assert_eq!(out[2].result, Ok(AstNode::Int(1)));
}

#[test]
fn submit_to_closed_port_is_refused() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let script = parse("(define x 1)").unwrap();
    let e = submit(format!("127.0.0.1:{port}"), &script, false).unwrap_err();
    assert!(matches!(e, ClientError::Connect { .. }), "{e}");
}

#[test]
fn sessions_share_one_environment() {
    let (_n, server, _d) = serve();
    let mut a = AdminClient::connect(server.local_addr()).unwrap();
    let mut b = AdminClient::connect(server.local_addr()).unwrap();
    a.eval(&parse_one("(define shared 7)").unwrap().unwrap()).unwrap().unwrap();
    let v = b.eval(&AstNode::symbol("shared")).unwrap().unwrap();
    assert_eq!(v, AstNode::Int(7));
    a.ping().unwrap();
    a.bye().unwrap();
    b.bye().unwrap();
}

#[test]
fn handles_travel_as_tagged_lists() {
    let (_n, server, _d) = serve();
    let mut c = AdminClient::connect(server.local_addr()).unwrap();
    let v = c.eval(&parse_one("(get_runtime)").unwrap().unwrap()).unwrap().unwrap();
    assert_eq!(v.to_string(), "(handle 1 1)");
}
