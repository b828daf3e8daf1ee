pub mod broker;
pub mod case;
pub mod client;
pub mod contour;
pub mod tools;
pub mod server;
pub mod value;
pub mod wire;
