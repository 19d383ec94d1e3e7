//! Data directories (`interactions.tsv` + `items.jsonl`), snapshots and providers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use log::info;
use tagcf::eval::{ingest_readers, write_interactions, write_items, Ingested};
use tagcf::knowledge::{Dataset, KnowledgeSnapshot, TagKind, TagVocabulary};
use tagcf::providers::{
    LogicReasoner, LogicReasoningRequest, LogicReasoningResponse, MockProvider, ProviderError, RemoteProvider,
    ENV_PROVIDER_TOKEN, ENV_PROVIDER_URL,
    ReplayProvider, TagExtractionRequest, TagExtractionResponse, TagExtractor,
};

pub const INTERACTIONS: &str = "interactions.tsv";
pub const ITEMS: &str = "items.jsonl";

pub fn load_snapshot_or_empty(path: &Path) -> Result<KnowledgeSnapshot> {
    if path.exists() {
        KnowledgeSnapshot::load(path).with_context(|| format!("loading {}", path.display()))
    } else {
        info!("{} does not exist; starting from an empty snapshot", path.display());
        Ok(KnowledgeSnapshot::empty())
    }
}

pub fn load_snapshot(path: &Path) -> Result<KnowledgeSnapshot> {
    KnowledgeSnapshot::load(path).with_context(|| format!("loading {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

/// Read a data directory, resolving tag texts against `snapshot`'s vocabularies.
pub fn load_dir(dir: &Path, snapshot: &KnowledgeSnapshot) -> Result<Ingested> {
    let inter = dir.join(INTERACTIONS);
    let items = dir.join(ITEMS);
    Ok(ingest_readers(
        open(&inter)?,
        &inter.display().to_string(),
        open(&items)?,
        &items.display().to_string(),
        snapshot.vocab(TagKind::UserRole).clone(),
        snapshot.vocab(TagKind::ItemTopic).clone(),
    )?)
}

/// Parse a bare items file, extending `snapshot`'s vocabularies.
pub fn load_items(path: &Path, snapshot: &KnowledgeSnapshot) -> Result<Ingested> {
    Ok(ingest_readers(
        std::io::empty(),
        "<none>",
        open(path)?,
        &path.display().to_string(),
        snapshot.vocab(TagKind::UserRole).clone(),
        snapshot.vocab(TagKind::ItemTopic).clone(),
    )?)
}

pub fn write_dir(dir: &Path, ds: &Dataset, user_vocab: &TagVocabulary, item_vocab: &TagVocabulary) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    };
    let mut w = create(INTERACTIONS)?;
    write_interactions(ds, &mut w)?;
    w.flush()?;
    let mut w = create(ITEMS)?;
    write_items(ds, user_vocab, item_vocab, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    User,
    Item,
}

impl From<KindArg> for TagKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::User => TagKind::UserRole,
            KindArg::Item => TagKind::ItemTopic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Mock,
    Replay,
    Remote,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub provider: ProviderKind,
    /// Recorded request/response lines for the replay provider.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Seed of the mock provider.
    #[arg(long, default_value_t = 0)]
    pub mock_seed: u64,
    /// Per-request timeout of the remote provider, in seconds.
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

/// One of the three provider implementations behind a single type.
pub enum Provider {
    Mock(MockProvider),
    Replay(ReplayProvider),
    Remote(RemoteProvider),
}

impl ProviderArgs {
    pub fn build(&self) -> Result<Provider> {
        Ok(match self.provider {
            ProviderKind::Mock => Provider::Mock(MockProvider::with_default_lexicons(self.mock_seed)),
            ProviderKind::Replay => {
                let Some(path) = &self.replay else {
                    bail!("--provider replay needs --replay <file>");
                };
                Provider::Replay(ReplayProvider::open(path)?)
            }
            ProviderKind::Remote => {
                let url = std::env::var(ENV_PROVIDER_URL).with_context(|| format!("{ENV_PROVIDER_URL} is not set"))?;
                let token = std::env::var(ENV_PROVIDER_TOKEN).ok();
                Provider::Remote(RemoteProvider::new(url, token, Duration::from_secs(self.timeout_secs)))
            }
        })
    }
}

impl TagExtractor for Provider {
    fn extract(&self, r: &TagExtractionRequest) -> Result<TagExtractionResponse, ProviderError> {
        match self {
            Provider::Mock(p) => p.extract(r),
            Provider::Replay(p) => p.extract(r),
            Provider::Remote(p) => p.extract(r),
        }
    }
}

impl LogicReasoner for Provider {
    fn reason(&self, r: &LogicReasoningRequest) -> Result<LogicReasoningResponse, ProviderError> {
        match self {
            Provider::Mock(p) => p.reason(r),
            Provider::Replay(p) => p.reason(r),
            Provider::Remote(p) => p.reason(r),
        }
    }
}
