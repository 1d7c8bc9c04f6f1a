use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Stage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub mention_id: String,
    pub annotator_id: String,
    pub stage: Stage,
    pub token: String,
    /// Epoch milliseconds.
    pub expires_at: i64,
}

/// At most one lease per mention. Expired leases are purged lazily.
#[derive(Debug, Default)]
pub struct LeaseTable {
    by_mention: HashMap<String, Lease>,
    by_token: HashMap<String, String>,
}

impl LeaseTable {
    pub fn purge_expired(&mut self, now: i64) {
        let expired: Vec<String> = self
            .by_mention
            .values()
            .filter(|l| l.expires_at <= now)
            .map(|l| l.mention_id.clone())
            .collect();
        for id in expired {
            self.release_mention(&id);
        }
    }

    pub fn holder(&self, mention_id: &str, now: i64) -> Option<&Lease> {
        self.by_mention
            .get(mention_id)
            .filter(|l| l.expires_at > now)
    }

    pub fn by_token(&self, token: &str) -> Option<&Lease> {
        self.by_token
            .get(token)
            .and_then(|id| self.by_mention.get(id))
    }

    /// Grants a lease; the caller must have checked that none is active.
    pub fn grant(&mut self, lease: Lease) {
        debug_assert!(!self.by_mention.contains_key(&lease.mention_id));
        self.by_token
            .insert(lease.token.clone(), lease.mention_id.clone());
        self.by_mention.insert(lease.mention_id.clone(), lease);
    }

    pub fn renew(&mut self, token: &str, expires_at: i64) -> Option<&Lease> {
        let id = self.by_token.get(token)?.clone();
        let lease = self.by_mention.get_mut(&id)?;
        lease.expires_at = expires_at;
        Some(lease)
    }

    pub fn release_mention(&mut self, mention_id: &str) -> Option<Lease> {
        let lease = self.by_mention.remove(mention_id)?;
        self.by_token.remove(&lease.token);
        Some(lease)
    }

    pub fn release_token(&mut self, token: &str) -> Option<Lease> {
        let id = self.by_token.get(token)?.clone();
        self.release_mention(&id)
    }

    pub fn active(&self, now: i64) -> impl Iterator<Item = &Lease> {
        self.by_mention.values().filter(move |l| l.expires_at > now)
    }

    pub fn len(&self) -> usize {
        self.by_mention.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_mention.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lease(id: &str, token: &str, exp: i64) -> Lease {
        Lease {
            mention_id: id.into(),
            annotator_id: "a".into(),
            stage: Stage::ModelReview,
            token: token.into(),
            expires_at: exp,
        }
    }

    #[test]
    fn grant_release_renew() {
        let mut t = LeaseTable::default();
        t.grant(lease("m1", "t1", 100));
        assert!(t.holder("m1", 50).is_some());
        assert!(t.holder("m1", 100).is_none());
        t.renew("t1", 200);
        assert!(t.holder("m1", 150).is_some());
        assert_eq!(t.release_token("t1").unwrap().mention_id, "m1");
        assert!(t.by_token("t1").is_none());
        assert!(t.is_empty());
    }

    #[test]
    fn purge() {
        let mut t = LeaseTable::default();
        t.grant(lease("m1", "t1", 100));
        t.grant(lease("m2", "t2", 300));
        t.purge_expired(200);
        assert_eq!(t.len(), 1);
        assert!(t.by_token("t1").is_none());
    }
}
