//! HTTP front end over [`Log`].

use std::collections::HashMap;
use std::io::Read;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Serialize;
use swt_core::api::{b64_decode, b64_encode, AddEntryRequest, AddWitnessedRootRequest, ErrorBody, FlushRequest, GetEntriesResponse, GetSourceResponse};
use swt_core::Digest;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::service::Log;
use crate::LogError;

/// A log served over HTTP on worker threads.
pub struct RunningServer {
    url: String,
    server: Arc<Server>,
    available: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
    log: Arc<Log>,
}

impl RunningServer {
    pub fn start(log: Arc<Log>, listen: &str, workers: usize) -> Result<Self, LogError> {
        let server = Arc::new(Server::http(listen).map_err(|e| LogError::Config(format!("bind {listen}: {e}")))?);
        let addr = server.server_addr().to_ip().ok_or_else(|| LogError::Config("not an IP listener".into()))?;
        let available = Arc::new(AtomicBool::new(true));
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let log = Arc::clone(&log);
                let available = Arc::clone(&available);
                std::thread::spawn(move || {
                    while let Ok(request) = server.recv() {
                        handle(&log, &available, request);
                    }
                })
            })
            .collect();
        Ok(RunningServer { url: format!("http://{addr}"), server, available, workers, log })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn log(&self) -> &Arc<Log> {
        &self.log
    }

    /// Fault injection: while unavailable every request gets 503.
    pub fn set_available(&self, up: bool) {
        self.available.store(up, Ordering::SeqCst);
    }

    /// Blocks until the server is shut down from another thread.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.server.unblock();
        for _ in 1..self.workers.len() {
            self.server.unblock();
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header")
}

fn respond<T: Serialize>(request: Request, status: u16, body: &T) {
    let bytes = serde_json::to_vec(body).expect("response serializes");
    let response = Response::from_data(bytes).with_status_code(status).with_header(json_header());
    if let Err(e) = request.respond(response) {
        log::debug!("client went away: {e}");
    }
}

fn respond_result<T: Serialize>(request: Request, result: Result<T, LogError>) {
    match result {
        Ok(body) => respond(request, 200, &body),
        Err(e) => {
            let status = e.status();
            respond(request, status, &ErrorBody { error: e.to_string() });
        }
    }
}

fn query_params(url: &str) -> HashMap<String, String> {
    let Some((_, query)) = url.split_once('?') else { return HashMap::new() };
    query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), percent_decode(v)))
        .collect()
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' if i + 2 < bytes.len() => {
                let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).ok();
                match hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                    Some(b) => {
                        out.push(b);
                        i += 3;
                        continue;
                    }
                    None => out.push(b'%'),
                }
            }
            b'+' => out.push(b' '),
            b => out.push(b),
        }
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn param<T: std::str::FromStr>(params: &HashMap<String, String>, name: &str) -> Result<T, LogError> {
    let raw = params.get(name).ok_or_else(|| LogError::BadRequest(format!("missing query parameter {name}")))?;
    raw.parse().map_err(|_| LogError::BadRequest(format!("bad query parameter {name}={raw:?}")))
}

fn read_json<T: serde::de::DeserializeOwned>(request: &mut Request, cap: u64) -> Result<T, LogError> {
    let mut body = Vec::new();
    // Base64 inflates by 4/3; leave room for the JSON envelope.
    let limit = cap / 3 * 4 + 64 * 1024;
    request
        .as_reader()
        .take(limit + 1)
        .read_to_end(&mut body)
        .map_err(|e| LogError::BadRequest(e.to_string()))?;
    if body.len() as u64 > limit {
        return Err(LogError::TooLarge { size: body.len() as u64, cap });
    }
    serde_json::from_slice(&body).map_err(|e| LogError::BadRequest(format!("bad JSON body: {e}")))
}

fn handle(log: &Log, available: &AtomicBool, mut request: Request) {
    if !available.load(Ordering::SeqCst) {
        respond(request, 503, &ErrorBody { error: "log temporarily unavailable".into() });
        return;
    }
    let url = request.url().to_string();
    let path = url.split('?').next().unwrap_or("").to_string();
    let params = query_params(&url);
    let cap = log.settings().max_blob_bytes;
    match (request.method().clone(), path.as_str()) {
        (Method::Post, "/log/v1/add-entry") => {
            let result = read_json::<AddEntryRequest>(&mut request, cap).and_then(|req| {
                let payload = b64_decode(&req.payload_b64).map_err(|e| LogError::BadRequest(format!("payload_b64: {e}")))?;
                log.submit(req.kind, &payload, &req.token)
            });
            respond_result(request, result);
        }
        (Method::Post, "/log/v1/flush") => {
            let result = read_json::<FlushRequest>(&mut request, 4096).and_then(|req| log.flush(&req.token));
            respond_result(request, result);
        }
        (Method::Post, "/log/v1/add-witnessed-root") => {
            let result = read_json::<AddWitnessedRootRequest>(&mut request, 64 * 1024).and_then(|req| log.add_witnessed_root(&req.sth));
            respond_result(request, result);
        }
        (Method::Get, "/log/v1/get-sth") => respond_result(request, log.get_sth()),
        (Method::Get, "/log/v1/get-proof") => {
            let result = (|| {
                let hash: Digest = param(&params, "hash")?;
                log.get_proof(&hash, param(&params, "tree_size")?)
            })();
            respond_result(request, result);
        }
        (Method::Get, "/log/v1/get-consistency") => {
            let result = (|| log.get_consistency(param(&params, "first")?, param(&params, "second")?))();
            respond_result(request, result);
        }
        (Method::Get, "/log/v1/get-entries") => {
            let result = (|| {
                let entries = log.get_entries(param(&params, "start")?, param(&params, "end")?)?;
                Ok(GetEntriesResponse { entries })
            })();
            respond_result(request, result);
        }
        (Method::Get, "/log/v1/get-source") => {
            let result = (|| {
                let name: String = param(&params, "name")?;
                let version: String = param(&params, "version")?;
                Ok(match log.get_source(&name, &version)? {
                    Ok(source) => GetSourceResponse::Available { source_b64: b64_encode(&source) },
                    Err(notice) => GetSourceResponse::Removed { notice_b64: b64_encode(&notice) },
                })
            })();
            respond_result(request, result);
        }
        (Method::Get, "/log/v1/get-witness") => {
            let result = (|| {
                let size: u64 = param(&params, "tree_size")?;
                log.witness_receipt(size).ok_or_else(|| LogError::NotFound(format!("no witness receipt for tree size {size}")))
            })();
            respond_result(request, result);
        }
        _ => respond(request, 404, &ErrorBody { error: format!("no route for {path}") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_queries() {
        let p = query_params("/x?name=foo&version=1%3A2.0%7Erc1&empty=");
        assert_eq!(p["name"], "foo");
        assert_eq!(p["version"], "1:2.0~rc1");
        assert_eq!(p["empty"], "");
        assert_eq!(percent_decode("a%2"), "a%2");
    }
}
