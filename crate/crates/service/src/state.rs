use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use embedrel::attribution::{attribute, AttributionTensor, Method};
use embedrel::corpus::{Corpus, LabeledDocument};
use embedrel::textcnn::{ModelParams, Prediction};
use lru::LruCache;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSettings {
    /// Attribution cache entry cap; `None` keeps every entry.
    pub cache_capacity: Option<NonZeroUsize>,
    pub default_page_size: usize,
    pub max_page_size: usize,
    /// Characters of raw text shown in document listings.
    pub snippet_chars: usize,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            cache_capacity: None,
            default_page_size: 50,
            max_page_size: 500,
            snippet_chars: 120,
        }
    }
}

type CacheKey = (usize, usize, Method);

/// A loaded model and corpus. Neither is mutated after construction; the
/// attribution cache only ever gains entries equal to what a fresh
/// computation would produce.
pub struct Session {
    params: ModelParams,
    corpus: Corpus,
    settings: ServiceSettings,
    cache: Mutex<LruCache<CacheKey, Arc<AttributionTensor>>>,
}

impl Session {
    pub fn new(params: ModelParams, corpus: Corpus, settings: ServiceSettings) -> Self {
        let cache = match settings.cache_capacity {
            Some(cap) => LruCache::new(cap),
            None => LruCache::unbounded(),
        };
        Session {
            params,
            corpus,
            settings,
            cache: Mutex::new(cache),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn settings(&self) -> &ServiceSettings {
        &self.settings
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    pub fn doc(&self, doc_id: usize) -> Option<&LabeledDocument> {
        self.corpus.doc(doc_id)
    }

    pub fn predict(&self, doc: &LabeledDocument) -> embedrel::Result<Prediction> {
        self.params.predict(&doc.token_ids)
    }

    /// Cached attribution of `doc` for `class`. Two racing requests may
    /// both compute it; they insert identical values.
    pub fn attribution(
        &self,
        doc: &LabeledDocument,
        class: usize,
        method: Method,
    ) -> embedrel::Result<Arc<AttributionTensor>> {
        let key = (doc.doc_id, class, method);
        if let Some(hit) = self.cache.lock().ok().and_then(|mut c| c.get(&key).cloned()) {
            return Ok(hit);
        }
        let fresh = Arc::new(attribute(&self.params, method, doc.doc_id, &doc.token_ids, class)?);
        if let Ok(mut cache) = self.cache.lock() {
            cache.put(key, Arc::clone(&fresh));
        }
        Ok(fresh)
    }
}

/// Shared handler state. Starts empty so the server can accept requests
/// (and answer 503) while the model is still being loaded.
#[derive(Clone, Default)]
pub struct AppState {
    session: Arc<OnceLock<Arc<Session>>>,
}

impl AppState {
    pub fn loading() -> Self {
        AppState::default()
    }

    pub fn ready(session: Session) -> Self {
        let state = AppState::default();
        state.install(session);
        state
    }

    /// Publishes the session. Later calls are ignored and return `false`.
    pub fn install(&self, session: Session) -> bool {
        self.session.set(Arc::new(session)).is_ok()
    }

    pub fn session(&self) -> Option<Arc<Session>> {
        self.session.get().cloned()
    }
}
