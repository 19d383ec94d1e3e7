use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use super::{
    LogicReasoner, LogicReasoningRequest, LogicReasoningResponse, ProviderError, TagExtractionRequest,
    TagExtractionResponse, TagExtractor,
};
use crate::knowledge::TagKind;

pub const ENV_PROVIDER_URL: &str = "TAGCF_PROVIDER_URL";
pub const ENV_PROVIDER_TOKEN: &str = "TAGCF_PROVIDER_TOKEN";

const MAX_ATTEMPTS: u32 = 3;

/// JSON-over-HTTP client for a hosted tagger.
///
/// `POST {base}/extract-tags` and `POST {base}/reason-logic`. Each body carries
/// the rendered prompt(s) plus the structured request; the endpoint answers
/// with the matching response type. Transport failures, 429 and 5xx are
/// retried up to three attempts with exponential backoff.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
    backoff: Duration,
}

impl RemoteProvider {
    pub fn new(base_url: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            agent,
            backoff: Duration::from_millis(250),
        }
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        let url = std::env::var(ENV_PROVIDER_URL)
            .map_err(|_| ProviderError::Config(format!("{ENV_PROVIDER_URL} is not set")))?;
        let token = std::env::var(ENV_PROVIDER_TOKEN).ok();
        Ok(RemoteProvider::new(url, token, Duration::from_secs(30)))
    }

    /// Base delay of the exponential backoff (doubles per retry).
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ProviderError> {
        let url = format!("{}/{}", self.base_url, path);
        let mut last = None;
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.try_post(&url, body) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() => {
                    log::warn!("provider call to {url} failed (attempt {}): {e}", attempt + 1);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn try_post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, ProviderError> {
        let mut req = self.agent.post(url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| ProviderError::Transport {
            retryable: true,
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(ProviderError::Transport {
                retryable: true,
                message: format!("HTTP {status}"),
            });
        }
        if status >= 400 {
            return Err(ProviderError::Transport {
                retryable: false,
                message: format!("HTTP {status}"),
            });
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| ProviderError::Contract(format!("malformed response body: {e}")))
    }
}

fn item_context(req: &TagExtractionRequest) -> String {
    req.text_fields
        .iter()
        .enumerate()
        .map(|(i, f)| format!("[field {}] {f}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn extraction_prompts(req: &TagExtractionRequest) -> (String, String) {
    let ctx = item_context(req);
    let user = format!(
        "Item content:\n{ctx}\nList 8 to 10 distinct kinds of people (social roles, professions, \
         life stages or hobbies) who would enjoy this item. Answer as a JSON list of short strings."
    );
    let item = format!(
        "Item content:\n{ctx}\nList 8 to 10 distinct, specific content topics covered by this item. \
         Answer as a JSON list of short strings."
    );
    (user, item)
}

pub(crate) fn logic_prompt(req: &LogicReasoningRequest) -> String {
    match req.kind {
        TagKind::UserRole => format!(
            "A user is described as `{}`. List content topics this user is likely to engage with. \
             Answer as a JSON list of short strings.",
            req.tag
        ),
        TagKind::ItemTopic => format!(
            "An item is about `{}`. List kinds of people likely to engage with it. \
             Answer as a JSON list of short strings.",
            req.tag
        ),
    }
}

impl TagExtractor for RemoteProvider {
    fn extract(&self, request: &TagExtractionRequest) -> Result<TagExtractionResponse, ProviderError> {
        let (user_prompt, item_prompt) = extraction_prompts(request);
        let body = json!({
            "user_tag_prompt": user_prompt,
            "item_tag_prompt": item_prompt,
            "request": request,
        });
        self.post("extract-tags", &body)
    }
}

impl LogicReasoner for RemoteProvider {
    fn reason(&self, request: &LogicReasoningRequest) -> Result<LogicReasoningResponse, ProviderError> {
        let body = json!({
            "prompt": logic_prompt(request),
            "request": request,
        });
        self.post("reason-logic", &body)
    }
}
