//! JSON-over-HTTP endpoint-picker service wrapping the laar-core policies.
//!
//! A trimmed-down analog of a proxy's external-processing extension: the
//! proxy (or any client) posts request features and retry metadata to
//! `/v1/select`, forwards to the returned model, and reports dispatch and
//! completion token counts to `/v1/report` so the picker tracks queue
//! depth. Selection is stateless per request; all retry context arrives in
//! the request body.

pub mod api;
pub mod http;
pub mod tracker;

use std::net::ToSocketAddrs;
use std::sync::Arc;

pub use api::{ServiceState, TEXT_SAMPLE_MAX_CHARS};
pub use http::{Request, Response, ServerHandle};
pub use tracker::EndpointTracker;

/// Binds `addr` and serves the picker API until the handle is dropped.
pub fn start_server(
    state: Arc<ServiceState>,
    addr: impl ToSocketAddrs,
) -> std::io::Result<ServerHandle> {
    http::serve(addr, move |request| api::route(&state, request))
}
