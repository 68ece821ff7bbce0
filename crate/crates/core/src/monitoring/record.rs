//! Trace journal record: one line per interception, `key=value` fields in
//! a fixed order.
//!
//! ```text
//! INFO date=2003-09-03 17:48:06,607 thread=req-1 topic=cvm.interceptors.server class=Echo method=send_reply line=0 request_id=52 operation=create arguments= exceptions= response_expected=true reply_status=SUCCESSFUL target=IDL:Echo:1.0 mono_us=1234
//! ```
//!
//! Values may contain spaces but never `=`; `%`, `=`, CR and LF inside
//! values are percent-encoded. `mono_us` is the monotonic timestamp used for
//! temporal metrics and is optional when parsing.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::interceptors::ReplyStatus;

pub const TOPIC: &str = "cvm.interceptors.server";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMethod {
    ReceiveRequest,
    SendReply,
}

impl TraceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceMethod::ReceiveRequest => "receive_request",
            TraceMethod::SendReply => "send_reply",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    /// Wall clock, `YYYY-MM-DD HH:MM:SS,mmm`.
    pub date: String,
    pub thread: String,
    pub topic: String,
    pub class: String,
    pub method: TraceMethod,
    pub line: u32,
    pub request_id: u64,
    pub operation: String,
    pub arguments: String,
    pub exceptions: String,
    pub response_expected: bool,
    pub reply_status: ReplyStatus,
    pub target_interface: String,
    pub mono_us: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordParseError {
    #[error("record does not start with INFO")]
    MissingLevel,
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("bad value for {field}: {value}")]
    BadValue { field: &'static str, value: String },
}

pub fn wall_clock_now() -> String {
    chrono::Local::now().format("%Y-%m-%d %H:%M:%S,%3f").to_string()
}

fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '%' => out.push_str("%25"),
            '=' => out.push_str("%3D"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(value: &str) -> String {
    value
        .replace("%3D", "=")
        .replace("%0A", "\n")
        .replace("%0D", "\r")
        .replace("%25", "%")
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "INFO date={} thread={} topic={} class={} method={} line={} request_id={} operation={} arguments={} exceptions={} response_expected={} reply_status={} target={}",
            escape(&self.date),
            escape(&self.thread),
            escape(&self.topic),
            escape(&self.class),
            self.method.as_str(),
            self.line,
            self.request_id,
            escape(&self.operation),
            escape(&self.arguments),
            escape(&self.exceptions),
            self.response_expected,
            self.reply_status,
            escape(&self.target_interface),
        )?;
        if let Some(ts) = self.mono_us {
            write!(f, " mono_us={ts}")?;
        }
        Ok(())
    }
}

impl FromStr for TraceRecord {
    type Err = RecordParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let rest = line
            .trim_end_matches(['\r', '\n'])
            .strip_prefix("INFO ")
            .ok_or(RecordParseError::MissingLevel)?;

        let mut fields: Vec<(&str, String)> = Vec::new();
        for token in rest.split_whitespace() {
            match token.split_once('=') {
                Some((key, value)) => fields.push((key, value.to_string())),
                None => {
                    if let Some((_, value)) = fields.last_mut() {
                        value.push(' ');
                        value.push_str(token);
                    }
                }
            }
        }
        let get = |name: &'static str| -> Result<String, RecordParseError> {
            fields
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| unescape(v))
                .ok_or(RecordParseError::MissingField(name))
        };
        fn num<T: FromStr>(field: &'static str, v: String) -> Result<T, RecordParseError> {
            v.parse().map_err(|_| RecordParseError::BadValue { field, value: v })
        }

        let method = match get("method")?.as_str() {
            "receive_request" => TraceMethod::ReceiveRequest,
            "send_reply" => TraceMethod::SendReply,
            other => {
                return Err(RecordParseError::BadValue {
                    field: "method",
                    value: other.to_string(),
                })
            }
        };
        let status = get("reply_status")?;
        Ok(TraceRecord {
            date: get("date")?,
            thread: get("thread")?,
            topic: get("topic")?,
            class: get("class")?,
            method,
            line: num("line", get("line")?)?,
            request_id: num("request_id", get("request_id")?)?,
            operation: get("operation")?,
            arguments: get("arguments")?,
            exceptions: get("exceptions")?,
            response_expected: num("response_expected", get("response_expected")?)?,
            reply_status: status.parse().map_err(|_| RecordParseError::BadValue {
                field: "reply_status",
                value: status.clone(),
            })?,
            target_interface: get("target")?,
            mono_us: match get("mono_us") {
                Ok(v) => Some(num("mono_us", v)?),
                Err(_) => None,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = "INFO date=2003-09-03 17:48:06,607 thread=req-1 topic=cvm.interceptors.server class=Echo method=send_reply line=0 request_id=52 operation=create arguments= exceptions= response_expected=true reply_status=SUCCESSFUL target=IDL:Echo:1.0";

    fn reference_record() -> TraceRecord {
        TraceRecord {
            date: "2003-09-03 17:48:06,607".into(),
            thread: "req-1".into(),
            topic: TOPIC.into(),
            class: "Echo".into(),
            method: TraceMethod::SendReply,
            line: 0,
            request_id: 52,
            operation: "create".into(),
            arguments: String::new(),
            exceptions: String::new(),
            response_expected: true,
            reply_status: ReplyStatus::Successful,
            target_interface: "IDL:Echo:1.0".into(),
            mono_us: None,
        }
    }

    #[test]
    fn formats_reference_line() {
        assert_eq!(reference_record().to_string(), REFERENCE);
    }

    #[test]
    fn parses_reference_line() {
        assert_eq!(REFERENCE.parse::<TraceRecord>().unwrap(), reference_record());
    }

    #[test]
    fn round_trips_awkward_values() {
        let mut r = reference_record();
        r.arguments = "(\"a=b\" \"50%\")".into();
        r.exceptions = "boom = bad\nline".into();
        r.thread = "Thread pool thread #1".into();
        r.mono_us = Some(123456);
        let line = r.to_string();
        assert!(!line.contains('\n'));
        assert_eq!(line.parse::<TraceRecord>().unwrap(), r);
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!("garbage".parse::<TraceRecord>().unwrap_err(), RecordParseError::MissingLevel);
        assert!(matches!(
            "INFO date=x".parse::<TraceRecord>().unwrap_err(),
            RecordParseError::MissingField(_)
        ));
    }

    #[test]
    fn wall_clock_shape() {
        let d = wall_clock_now();
        assert_eq!(d.len(), "2003-09-03 17:48:06,607".len());
        assert_eq!(&d[19..20], ",");
    }
}
