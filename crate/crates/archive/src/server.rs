//! `POST /archive/v1/upload`: body is a canonical source package envelope,
//! response is the [`UploadQueueItem`](crate::UploadQueueItem) as JSON.

use std::io::Read;
use std::sync::Arc;
use std::thread::JoinHandle;

use swt_core::api::ErrorBody;
use swt_core::clock::SharedClock;
use swt_core::model::{Canonical, SourcePackage};
use tiny_http::{Header, Method, Response, Server};

use crate::Archive;

pub struct UploadServer {
    url: String,
    server: Arc<Server>,
    worker: Option<JoinHandle<()>>,
}

const MAX_UPLOAD: u64 = 64 * 1024 * 1024;

impl UploadServer {
    pub fn start(archive: Arc<Archive>, clock: SharedClock, listen: &str) -> std::io::Result<Self> {
        let server = Arc::new(Server::http(listen).map_err(|e| std::io::Error::other(e.to_string()))?);
        let addr = server.server_addr().to_ip().ok_or_else(|| std::io::Error::other("not an IP listener"))?;
        let worker = {
            let server = Arc::clone(&server);
            std::thread::spawn(move || {
                while let Ok(mut request) = server.recv() {
                    let (status, body) = if request.method() == &Method::Post && request.url() == "/archive/v1/upload" {
                        let mut raw = Vec::new();
                        match request.as_reader().take(MAX_UPLOAD).read_to_end(&mut raw) {
                            Err(e) => (400, serde_json::to_vec(&ErrorBody { error: e.to_string() })),
                            Ok(_) => match SourcePackage::parse(&raw) {
                                Err(e) => (400, serde_json::to_vec(&ErrorBody { error: e.to_string() })),
                                Ok(pkg) => (200, serde_json::to_vec(&archive.accept_upload(pkg, clock.now_ms(), false))),
                            },
                        }
                    } else {
                        (404, serde_json::to_vec(&ErrorBody { error: "no such route".into() }))
                    };
                    let header = Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
                    let response = Response::from_data(body.expect("serializable")).with_status_code(status).with_header(header);
                    let _ = request.respond(response);
                }
            })
        };
        Ok(UploadServer { url: format!("http://{addr}"), server, worker: Some(worker) })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for UploadServer {
    fn drop(&mut self) {
        self.server.unblock();
    }
}
