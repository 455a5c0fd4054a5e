//! The std side of the toolkit: HTML parsing into the core tree, file
//! formats, policy backends, a WebDriver client and live browser
//! environment, configuration, parallel evaluation and the loss self-check.
//! The `webnav` binary is built on these modules.

pub mod browser;
pub mod config;
pub mod eval;
pub mod formats;
pub mod html;
pub mod losscheck;
pub mod policy;
pub mod rft;
pub mod webdriver;
