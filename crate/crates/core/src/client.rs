//! Blocking HTTP client for the log interface, with payload byte accounting.

use std::collections::BTreeMap;
use std::io::Read;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::api::{
    b64_decode, b64_encode, AddEntryRequest, AddEntryResponse, AddWitnessedRootRequest, EntryData, Endpoint, ErrorBody,
    FlushRequest, GetEntriesResponse, GetSourceResponse,
};
use crate::merkle::{ConsistencyProof, InclusionProof};
use crate::model::{Canonical, RemovalNotice, SourcePackage};
use crate::tlog::{EntryKind, SignedTreeRoot, WitnessReceipt};
use crate::version::VersionString;
use crate::Digest;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("log at {url} unreachable: {message}")]
    Unreachable { url: String, message: String },
    #[error("log returned {status}: {message}")]
    Status { status: u16, message: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, ClientError::Status { status: 404, .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficCount {
    pub requests: u64,
    pub request_bytes: u64,
    pub response_bytes: u64,
}

/// Request and response payload bytes per endpoint. Clones share counters.
#[derive(Debug, Clone, Default)]
pub struct Traffic(Arc<Mutex<BTreeMap<Endpoint, TrafficCount>>>);

impl Traffic {
    fn record(&self, endpoint: Endpoint, request_bytes: usize, response_bytes: usize) {
        let mut map = self.0.lock().unwrap();
        let c = map.entry(endpoint).or_default();
        c.requests += 1;
        c.request_bytes += request_bytes as u64;
        c.response_bytes += response_bytes as u64;
    }

    pub fn snapshot(&self) -> BTreeMap<Endpoint, TrafficCount> {
        self.0.lock().unwrap().clone()
    }

    pub fn reset(&self) {
        self.0.lock().unwrap().clear();
    }
}

/// Either the original source or the notice that replaced it.
#[derive(Debug, Clone)]
pub enum SourceLookup {
    Available(SourcePackage),
    Removed(RemovalNotice),
}

#[derive(Debug, Clone)]
pub struct LogClient {
    base: String,
    agent: ureq::Agent,
    traffic: Traffic,
}

impl LogClient {
    pub fn new(base_url: &str) -> Self {
        LogClient::with_traffic(base_url, Traffic::default())
    }

    pub fn with_traffic(base_url: &str, traffic: Traffic) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(2))
            .timeout(Duration::from_secs(60))
            .build();
        LogClient { base: base_url.trim_end_matches('/').to_string(), agent, traffic }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub fn traffic(&self) -> &Traffic {
        &self.traffic
    }

    fn finish<T: DeserializeOwned>(
        &self,
        endpoint: Endpoint,
        request_bytes: usize,
        result: Result<ureq::Response, ureq::Error>,
    ) -> Result<T, ClientError> {
        let (ok, response) = match result {
            Ok(r) => (true, r),
            Err(ureq::Error::Status(_, r)) => (false, r),
            Err(ureq::Error::Transport(t)) => {
                return Err(ClientError::Unreachable { url: self.base.clone(), message: t.to_string() })
            }
        };
        let status = response.status();
        let mut body = Vec::new();
        response
            .into_reader()
            .read_to_end(&mut body)
            .map_err(|e| ClientError::Unreachable { url: self.base.clone(), message: e.to_string() })?;
        self.traffic.record(endpoint, request_bytes, body.len());
        if !ok {
            let message = serde_json::from_slice::<ErrorBody>(&body)
                .map(|e| e.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
            return Err(ClientError::Status { status, message });
        }
        serde_json::from_slice(&body).map_err(|e| ClientError::Decode(format!("{}: {e}", endpoint.path())))
    }

    fn get<T: DeserializeOwned>(&self, endpoint: Endpoint, query: &[(&str, String)]) -> Result<T, ClientError> {
        let url = format!("{}{}", self.base, endpoint.path());
        let mut req = self.agent.get(&url);
        let mut request_bytes = endpoint.path().len();
        for (k, v) in query {
            req = req.query(k, v);
            request_bytes += k.len() + v.len() + 2;
        }
        self.finish(endpoint, request_bytes, req.call())
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, endpoint: Endpoint, body: &B) -> Result<T, ClientError> {
        let url = format!("{}{}", self.base, endpoint.path());
        let json = serde_json::to_vec(body).map_err(|e| ClientError::Decode(e.to_string()))?;
        let result = self.agent.post(&url).set("Content-Type", "application/json").send_bytes(&json);
        self.finish(endpoint, json.len(), result)
    }

    pub fn add_entry(&self, kind: EntryKind, payload: &[u8], token: &str) -> Result<AddEntryResponse, ClientError> {
        let req = AddEntryRequest { kind, payload_b64: b64_encode(payload), token: token.to_string() };
        self.post(Endpoint::AddEntry, &req)
    }

    pub fn flush(&self, token: &str) -> Result<SignedTreeRoot, ClientError> {
        self.post(Endpoint::Flush, &FlushRequest { token: token.to_string() })
    }

    pub fn add_witnessed_root(&self, sth: &SignedTreeRoot) -> Result<AddEntryResponse, ClientError> {
        self.post(Endpoint::AddWitnessedRoot, &AddWitnessedRootRequest { sth: sth.clone() })
    }

    pub fn get_sth(&self) -> Result<SignedTreeRoot, ClientError> {
        self.get(Endpoint::GetSth, &[])
    }

    /// `hash` may be the item digest (SHA-256 of the payload) or the leaf hash.
    pub fn get_proof(&self, hash: &Digest, tree_size: u64) -> Result<InclusionProof, ClientError> {
        self.get(Endpoint::GetProof, &[("hash", hash.to_hex()), ("tree_size", tree_size.to_string())])
    }

    pub fn get_consistency(&self, first: u64, second: u64) -> Result<ConsistencyProof, ClientError> {
        self.get(Endpoint::GetConsistency, &[("first", first.to_string()), ("second", second.to_string())])
    }

    /// Entries `start..=end`.
    pub fn get_entries(&self, start: u64, end: u64) -> Result<Vec<EntryData>, ClientError> {
        let r: GetEntriesResponse =
            self.get(Endpoint::GetEntries, &[("start", start.to_string()), ("end", end.to_string())])?;
        Ok(r.entries)
    }

    /// Entries `start..end`, paging as the log caps batch sizes.
    pub fn get_all_entries(&self, start: u64, end: u64) -> Result<Vec<EntryData>, ClientError> {
        let mut out = Vec::with_capacity(end.saturating_sub(start) as usize);
        let mut next = start;
        while next < end {
            let batch = self.get_entries(next, end - 1)?;
            if batch.is_empty() {
                return Err(ClientError::Decode(format!("empty entry batch at {next}")));
            }
            next += batch.len() as u64;
            out.extend(batch);
        }
        Ok(out)
    }

    pub fn get_source(&self, name: &str, version: &VersionString) -> Result<SourceLookup, ClientError> {
        let r: GetSourceResponse =
            self.get(Endpoint::GetSource, &[("name", name.to_string()), ("version", version.to_string())])?;
        let decode = |s: &str| b64_decode(s).map_err(|e| ClientError::Decode(e.to_string()));
        match r {
            GetSourceResponse::Available { source_b64 } => SourcePackage::parse(&decode(&source_b64)?)
                .map(SourceLookup::Available)
                .map_err(|e| ClientError::Decode(e.to_string())),
            GetSourceResponse::Removed { notice_b64 } => RemovalNotice::parse(&decode(&notice_b64)?)
                .map(SourceLookup::Removed)
                .map_err(|e| ClientError::Decode(e.to_string())),
        }
    }

    pub fn get_witness(&self, tree_size: u64) -> Result<WitnessReceipt, ClientError> {
        self.get(Endpoint::GetWitness, &[("tree_size", tree_size.to_string())])
    }
}
