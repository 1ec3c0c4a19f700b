use std::io::Read;
use std::time::Duration;

use serde::Deserialize;

use crate::definitions::{is_identifier, parse_sdd, serialize_sdd, SensorDeviceDefinition};

use super::{CloudError, CloudRegistry, PutOutcome, SearchHit};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(3);
const MAX_BODY: u64 = 4 * 1024 * 1024;

/// HTTP client for a definition registry service.
#[derive(Debug, Clone)]
pub struct CloudClient {
    base: url::Url,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct PutBody {
    outcome: PutOutcome,
}

fn read_body(resp: ureq::Response) -> Result<String, CloudError> {
    let mut body = String::new();
    resp.into_reader()
        .take(MAX_BODY)
        .read_to_string(&mut body)
        .map_err(|e| CloudError::Unreachable(format!("reading response: {e}")))?;
    Ok(body)
}

impl CloudClient {
    pub fn new(base_url: &str) -> Result<Self, CloudError> {
        Self::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    /// `timeout` bounds each request end to end.
    pub fn with_timeout(base_url: &str, timeout: Duration) -> Result<Self, CloudError> {
        let mut base = url::Url::parse(base_url).map_err(|e| CloudError::BadUrl(format!("{base_url}: {e}")))?;
        if !matches!(base.scheme(), "http" | "https") {
            return Err(CloudError::BadUrl(format!("{base_url}: scheme must be http or https")));
        }
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Ok(CloudClient { base, agent })
    }

    pub fn base_url(&self) -> &str {
        self.base.as_str()
    }

    fn url(&self, path: &str) -> String {
        self.base.join(path).expect("relative registry paths always join").to_string()
    }
}

fn transport(e: ureq::Error) -> CloudError {
    match e {
        ureq::Error::Status(code, resp) => {
            let body = read_body(resp).unwrap_or_default();
            CloudError::Rejected { status: code, message: body.trim().to_string() }
        }
        ureq::Error::Transport(t) => CloudError::Unreachable(t.to_string()),
    }
}

impl CloudRegistry for CloudClient {
    fn get(&self, name: &str) -> Result<Option<SensorDeviceDefinition>, CloudError> {
        if !is_identifier(name) {
            return Ok(None);
        }
        let resp = match self.agent.get(&self.url(&format!("sdd/{name}"))).call() {
            Ok(resp) => resp,
            Err(ureq::Error::Status(404, _)) => return Ok(None),
            Err(e) => return Err(transport(e)),
        };
        let body = read_body(resp)?;
        let sdd = parse_sdd(&body).map_err(|e| CloudError::BadPayload(e.to_string()))?;
        if sdd.name != name {
            return Err(CloudError::BadPayload(format!("asked for `{name}`, got `{}`", sdd.name)));
        }
        Ok(Some(sdd))
    }

    fn put(&self, sdd: &SensorDeviceDefinition) -> Result<PutOutcome, CloudError> {
        let result = self
            .agent
            .put(&self.url(&format!("sdd/{}", sdd.name)))
            .set("Content-Type", "application/xml")
            .send_string(&serialize_sdd(sdd));
        let resp = match result {
            Ok(resp) => resp,
            Err(ureq::Error::Status(409, _)) => return Ok(PutOutcome::Conflict),
            Err(e) => return Err(transport(e)),
        };
        let status = resp.status();
        let body: PutBody = serde_json::from_str(&read_body(resp)?)
            .map_err(|e| CloudError::BadPayload(format!("put response: {e}")))?;
        match (status, body.outcome) {
            (201, PutOutcome::Created) => Ok(PutOutcome::Created),
            (200, o @ (PutOutcome::UpdatedVersion | PutOutcome::IdenticalNoop)) => Ok(o),
            (status, o) => Err(CloudError::BadPayload(format!("status {status} with outcome {o:?}"))),
        }
    }

    fn search(&self, query: &str) -> Result<Vec<SearchHit>, CloudError> {
        let resp = self
            .agent
            .get(&self.url("search"))
            .query("q", query)
            .call()
            .map_err(transport)?;
        serde_json::from_str(&read_body(resp)?).map_err(|e| CloudError::BadPayload(format!("search response: {e}")))
    }
}
