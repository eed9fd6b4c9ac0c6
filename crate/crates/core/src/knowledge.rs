//! Knowledge router: pattern-addressed sources, version-keyed result cache,
//! and per-entity history rings.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    CurrentState,
    Historical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub name: String,
    pub patterns: Vec<String>,
    pub capabilities: BTreeSet<Capability>,
}

impl SourceDescriptor {
    pub fn new(name: impl Into<String>, patterns: &[&str], capabilities: &[Capability]) -> Self {
        Self {
            name: name.into(),
            patterns: patterns.iter().map(|p| p.to_string()).collect(),
            capabilities: capabilities.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnowledgeError {
    #[error("pattern {0:?} is already registered")]
    PatternConflict(String),
    #[error("invalid pattern {0:?}")]
    InvalidPattern(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("no source matches {0:?}")]
    NotRouted(String),
    #[error("source {source_name} failed: {message}")]
    SourceFailure { source_name: String, message: String },
    #[error("no history recorded for {0:?}")]
    UnknownEntity(String),
    #[error("history for {entity} must advance: tick {tick} after {last}")]
    NonMonotonicTick { entity: String, last: u64, tick: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Wildcard,
}

/// A slash-separated pattern where `*` matches exactly one segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    raw: String,
    segments: Vec<Segment>,
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Self, KnowledgeError> {
        let segments = split_path(raw)
            .ok_or_else(|| KnowledgeError::InvalidPattern(raw.to_string()))?
            .into_iter()
            .map(|s| {
                if s == "*" {
                    Segment::Wildcard
                } else {
                    Segment::Literal(s.to_string())
                }
            })
            .collect();
        Ok(Self {
            raw: raw.to_string(),
            segments,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn wildcards(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Wildcard))
            .count()
    }

    /// Returns the segments captured by wildcards when `path` matches.
    pub fn captures(&self, path: &[&str]) -> Option<Vec<String>> {
        if path.len() != self.segments.len() {
            return None;
        }
        let mut captured = Vec::new();
        for (seg, part) in self.segments.iter().zip(path) {
            match seg {
                Segment::Wildcard => captured.push(part.to_string()),
                Segment::Literal(lit) if lit == part => {}
                Segment::Literal(_) => return None,
            }
        }
        Some(captured)
    }
}

/// Splits a path into nonempty segments; `None` if any segment is empty.
pub fn split_path(path: &str) -> Option<Vec<&str>> {
    if path.is_empty() {
        return None;
    }
    let parts: Vec<&str> = path.split('/').collect();
    parts.iter().all(|p| !p.is_empty()).then_some(parts)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeQuery {
    pub path: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    #[serde(default)]
    pub wants_history: bool,
}

impl KnowledgeQuery {
    pub fn new(path: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            ..Self::default()
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn history(mut self) -> Self {
        self.wants_history = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub source: String,
    pub payload: Value,
    pub state_version: u64,
    pub from_cache: bool,
}

/// The pattern a query resolved to, with wildcard captures in order.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteMatch {
    pub source: String,
    pub pattern: String,
    pub captures: Vec<String>,
}

/// Anything that carries a monotonically increasing state version.
pub trait Versioned {
    fn state_version(&self) -> u64;
}

pub type Handler<C> =
    Arc<dyn Fn(&C, &KnowledgeQuery, &RouteMatch) -> Result<Value, String> + Send + Sync>;

struct Registration {
    pattern: Pattern,
    source: usize,
}

struct Source<C> {
    descriptor: SourceDescriptor,
    handler: Handler<C>,
}

#[derive(Default)]
struct Cache {
    version: u64,
    entries: HashMap<KnowledgeQuery, QueryResult>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Routes queries over a context `C` (usually a locked testbed snapshot).
pub struct KnowledgeRouter<C> {
    sources: Vec<Source<C>>,
    registrations: Vec<Registration>,
    cache: Mutex<Cache>,
    caching: AtomicBool,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<C> Default for KnowledgeRouter<C> {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            registrations: Vec::new(),
            cache: Mutex::new(Cache::default()),
            caching: AtomicBool::new(true),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }
}

impl<C> std::fmt::Debug for KnowledgeRouter<C> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeRouter")
            .field("sources", &self.sources.iter().map(|s| &s.descriptor).collect::<Vec<_>>())
            .finish()
    }
}

impl<C: Versioned> KnowledgeRouter<C> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a source. Fails without side effects if any of its pattern
    /// strings is already registered.
    pub fn register_source(
        &mut self,
        descriptor: SourceDescriptor,
        handler: Handler<C>,
    ) -> Result<(), KnowledgeError> {
        let mut parsed = Vec::with_capacity(descriptor.patterns.len());
        for raw in &descriptor.patterns {
            let taken = self.registrations.iter().any(|r| r.pattern.raw == *raw)
                || parsed.iter().any(|p: &Pattern| p.raw == *raw);
            if taken {
                return Err(KnowledgeError::PatternConflict(raw.clone()));
            }
            parsed.push(Pattern::parse(raw)?);
        }
        let source = self.sources.len();
        self.registrations
            .extend(parsed.into_iter().map(|pattern| Registration { pattern, source }));
        self.sources.push(Source {
            descriptor,
            handler,
        });
        Ok(())
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &SourceDescriptor> {
        self.sources.iter().map(|s| &s.descriptor)
    }

    /// Registered pattern strings in registration order.
    pub fn patterns(&self) -> impl Iterator<Item = &str> {
        self.registrations.iter().map(|r| r.pattern.as_str())
    }

    /// Picks the matching pattern with the fewest wildcards, earliest
    /// registration first on ties.
    pub fn resolve(&self, query: &KnowledgeQuery) -> Result<RouteMatch, KnowledgeError> {
        self.resolve_source(query).map(|(_, m)| m)
    }

    fn resolve_source(&self, query: &KnowledgeQuery) -> Result<(usize, RouteMatch), KnowledgeError> {
        let parts = split_path(&query.path)
            .ok_or_else(|| KnowledgeError::InvalidQuery(format!("malformed path {:?}", query.path)))?;
        let mut best: Option<(usize, &Registration, Vec<String>)> = None;
        for reg in &self.registrations {
            let source = &self.sources[reg.source];
            if query.wants_history
                && !source.descriptor.capabilities.contains(&Capability::Historical)
            {
                continue;
            }
            let Some(captures) = reg.pattern.captures(&parts) else {
                continue;
            };
            let w = reg.pattern.wildcards();
            if best.as_ref().is_none_or(|(bw, _, _)| w < *bw) {
                best = Some((w, reg, captures));
            }
        }
        let (_, reg, captures) = best.ok_or_else(|| KnowledgeError::NotRouted(query.path.clone()))?;
        Ok((
            reg.source,
            RouteMatch {
                source: self.sources[reg.source].descriptor.name.clone(),
                pattern: reg.pattern.raw.clone(),
                captures,
            },
        ))
    }

    /// Routes without consulting the cache.
    pub fn route(&self, ctx: &C, query: &KnowledgeQuery) -> Result<QueryResult, KnowledgeError> {
        let (idx, m) = self.resolve_source(query)?;
        let payload = (self.sources[idx].handler)(ctx, query, &m).map_err(|message| {
            KnowledgeError::SourceFailure {
                source_name: m.source.clone(),
                message,
            }
        })?;
        Ok(QueryResult {
            source: m.source,
            payload,
            state_version: ctx.state_version(),
            from_cache: false,
        })
    }

    /// Routes through the cache keyed on (query, state_version). A newer
    /// version discards every older entry; errors are never cached.
    pub fn query_cached(
        &self,
        ctx: &C,
        query: &KnowledgeQuery,
    ) -> Result<QueryResult, KnowledgeError> {
        if !self.caching.load(Ordering::Relaxed) {
            return self.route(ctx, query);
        }
        let version = ctx.state_version();
        {
            let mut cache = self.cache.lock();
            if cache.version < version {
                cache.entries.clear();
                cache.version = version;
            } else if cache.version == version {
                if let Some(hit) = cache.entries.get(query) {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(QueryResult {
                        from_cache: true,
                        ..hit.clone()
                    });
                }
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let result = self.route(ctx, query)?;
        let mut cache = self.cache.lock();
        if cache.version == version {
            cache.entries.insert(query.clone(), result.clone());
        }
        Ok(result)
    }

    pub fn set_caching(&self, enabled: bool) {
        self.caching.store(enabled, Ordering::Relaxed);
        if !enabled {
            self.cache.lock().entries.clear();
        }
    }

    pub fn caching_enabled(&self) -> bool {
        self.caching.load(Ordering::Relaxed)
    }

    pub fn cache_stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub entity_path: String,
    pub tick: u64,
    pub snapshot: Value,
}

pub const DEFAULT_HISTORY_DEPTH: usize = 1000;

/// Bounded per-entity history.
#[derive(Clone, Debug)]
pub struct HistoryStore {
    depth: usize,
    rings: BTreeMap<String, VecDeque<HistoryRecord>>,
}

impl Default for HistoryStore {
    fn default() -> Self {
        Self::new(DEFAULT_HISTORY_DEPTH)
    }
}

impl HistoryStore {
    pub fn new(depth: usize) -> Self {
        Self {
            depth: depth.max(1),
            rings: BTreeMap::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn record_history(
        &mut self,
        entity_path: &str,
        tick: u64,
        snapshot: Value,
    ) -> Result<(), KnowledgeError> {
        let ring = self.rings.entry(entity_path.to_string()).or_default();
        if let Some(last) = ring.back() {
            if tick <= last.tick {
                return Err(KnowledgeError::NonMonotonicTick {
                    entity: entity_path.to_string(),
                    last: last.tick,
                    tick,
                });
            }
        }
        if ring.len() == self.depth {
            ring.pop_front();
        }
        ring.push_back(HistoryRecord {
            entity_path: entity_path.to_string(),
            tick,
            snapshot,
        });
        Ok(())
    }

    /// Records with `now - window < tick <= now`, ascending.
    pub fn get_history(
        &self,
        entity_path: &str,
        window: u64,
        now: u64,
    ) -> Result<Vec<HistoryRecord>, KnowledgeError> {
        let ring = self
            .rings
            .get(entity_path)
            .ok_or_else(|| KnowledgeError::UnknownEntity(entity_path.to_string()))?;
        let floor = now.saturating_sub(window);
        Ok(ring
            .iter()
            .filter(|r| r.tick > floor && r.tick <= now)
            .cloned()
            .collect())
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.rings.keys().map(String::as_str)
    }
}
