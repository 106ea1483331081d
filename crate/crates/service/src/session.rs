use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use triage_core::questionnaire::InterviewState;

/// A live interview. Locked for the length of one request, so requests on the
/// same session are serialized while different sessions proceed in parallel.
#[derive(Debug)]
pub struct Session {
    pub state: InterviewState,
    pub created: Instant,
}

pub type SessionHandle = Arc<Mutex<Session>>;

/// In-memory sessions keyed by 128-bit random ids. A session expires a fixed
/// time after creation; expired sessions are never returned and are dropped
/// on the next access or purge.
#[derive(Debug)]
pub struct SessionStore {
    ttl: Duration,
    sessions: Mutex<HashMap<String, SessionHandle>>,
}

/// 32 hex digits from the thread-local CSPRNG.
pub fn new_session_id() -> String {
    hex::encode(rand::random::<u128>().to_be_bytes())
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panicking handler cannot leave a session half-updated: engine
    // updates are all-or-nothing, so a poisoned lock is still consistent.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Stores a new interview under a fresh id, which is also written into
    /// the state.
    pub fn insert(&self, mut state: InterviewState) -> String {
        let mut sessions = lock(&self.sessions);
        let id = loop {
            let id = new_session_id();
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        state.session_id = id.clone();
        sessions.insert(
            id.clone(),
            Arc::new(Mutex::new(Session {
                state,
                created: Instant::now(),
            })),
        );
        id
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.get_at(id, Instant::now())
    }

    pub fn get_at(&self, id: &str, now: Instant) -> Option<SessionHandle> {
        let mut sessions = lock(&self.sessions);
        let handle = sessions.get(id)?.clone();
        let expired = now.saturating_duration_since(lock(&handle).created) >= self.ttl;
        if expired {
            sessions.remove(id);
            return None;
        }
        Some(handle)
    }

    /// Runs `f` with exclusive access to one live session.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> T) -> Option<T> {
        let handle = self.get(id)?;
        let mut session = lock(&handle);
        Some(f(&mut session))
    }

    /// Drops every expired session; returns how many were removed.
    pub fn purge_expired(&self, now: Instant) -> usize {
        let mut sessions = lock(&self.sessions);
        let before = sessions.len();
        sessions.retain(|_, s| now.saturating_duration_since(lock(s).created) < self.ttl);
        before - sessions.len()
    }

    pub fn len(&self) -> usize {
        lock(&self.sessions).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
