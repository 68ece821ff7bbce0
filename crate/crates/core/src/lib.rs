pub mod admin;
pub mod bench;
pub mod crypto;
pub mod cvm;
pub mod demo;
pub mod interceptors;
pub mod lang;
pub mod monitoring;
pub mod runtime;
pub mod scripts;
