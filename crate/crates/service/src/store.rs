//! In-memory session store.
//!
//! The map itself sits behind a short-lived std mutex taken only to look up,
//! insert or evict. Each session carries its own tokio mutex, which queues
//! waiters in FIFO order, so requests on one session run one at a time while
//! other sessions proceed independently.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use menulens_core::prefs::PreferenceDoc;
use menulens_core::recommend::ChatSession;
use rand::RngCore;

pub const DEFAULT_CAPACITY: usize = 1000;

/// Per-session state. `chat` is empty until a menu has been ingested.
#[derive(Debug, Default)]
pub struct Slot {
    pub docs: Vec<PreferenceDoc>,
    pub chat: Option<ChatSession>,
}

struct Entry {
    slot: Arc<tokio::sync::Mutex<Slot>>,
    created: Instant,
    last_active: Instant,
}

#[derive(Debug, PartialEq, Eq)]
pub struct StoreFull;

pub struct SessionStore {
    inner: Mutex<HashMap<String, Entry>>,
    capacity: usize,
}

/// 16 random bytes, URL-safe base64 without padding.
pub fn new_session_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}

pub fn is_valid_session_id(id: &str) -> bool {
    id.len() == 22 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl SessionStore {
    pub fn new(capacity: usize) -> Self {
        SessionStore { inner: Mutex::new(HashMap::new()), capacity: capacity.max(1) }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Inserts a new session, evicting the least recently used idle one when
    /// full. A session is idle when no request holds or waits for it.
    pub fn insert(&self, slot: Slot) -> Result<String, StoreFull> {
        let mut map = self.inner.lock().unwrap();
        if map.len() >= self.capacity {
            let victim = map
                .iter()
                .filter(|(_, e)| Arc::strong_count(&e.slot) == 1)
                .min_by(|a, b| a.1.last_active.cmp(&b.1.last_active).then(a.1.created.cmp(&b.1.created)))
                .map(|(id, _)| id.clone());
            match victim {
                Some(id) => {
                    log::info!("evicting idle session {id}");
                    map.remove(&id);
                }
                None => return Err(StoreFull),
            }
        }
        let mut id = new_session_id();
        while map.contains_key(&id) {
            id = new_session_id();
        }
        let now = Instant::now();
        map.insert(id.clone(), Entry { slot: Arc::new(tokio::sync::Mutex::new(slot)), created: now, last_active: now });
        Ok(id)
    }

    /// Handle to a session, marking it active. Holding the handle keeps the
    /// session from being evicted.
    pub fn get(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<Slot>>> {
        let mut map = self.inner.lock().unwrap();
        let entry = map.get_mut(id)?;
        entry.last_active = Instant::now();
        Some(entry.slot.clone())
    }
}
