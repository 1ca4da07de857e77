use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use crate::phy_mac::NodeId;
use crate::sim::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    /// `None` for routes learned without a sequence number (neighbours).
    pub dest_seq: Option<u32>,
    pub expires_at: SimTime,
    pub valid: bool,
    /// Upstream neighbours that forward traffic for `dest` through us.
    pub precursors: BTreeSet<NodeId>,
}

impl RouteEntry {
    pub fn new(
        dest: NodeId,
        next_hop: NodeId,
        hop_count: u32,
        dest_seq: Option<u32>,
        expires_at: SimTime,
    ) -> Self {
        debug_assert!(hop_count >= 1);
        RouteEntry {
            dest,
            next_hop,
            hop_count,
            dest_seq,
            expires_at,
            valid: true,
            precursors: BTreeSet::new(),
        }
    }

    pub fn usable(&self, now: SimTime) -> bool {
        self.valid && now < self.expires_at
    }
}

#[derive(Debug, Clone, Default)]
pub struct RouteTable {
    entries: BTreeMap<NodeId, RouteEntry>,
}

impl RouteTable {
    pub fn lookup(&self, dest: NodeId, now: SimTime) -> Option<NodeId> {
        self.entries
            .get(&dest)
            .filter(|e| e.usable(now))
            .map(|e| e.next_hop)
    }

    pub fn get(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.entries.get(&dest)
    }

    pub fn get_mut(&mut self, dest: NodeId) -> Option<&mut RouteEntry> {
        self.entries.get_mut(&dest)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values()
    }

    /// Installs `candidate` if it beats the current entry: no usable entry,
    /// a fresher sequence number, or an equal one with fewer hops. An
    /// accepted update keeps the precursor list. Returns whether the table
    /// changed.
    pub fn offer(&mut self, candidate: RouteEntry, now: SimTime) -> bool {
        match self.entries.get_mut(&candidate.dest) {
            None => {
                self.entries.insert(candidate.dest, candidate);
                true
            }
            Some(cur) => {
                let better = if !cur.usable(now) {
                    true
                } else {
                    match (candidate.dest_seq, cur.dest_seq) {
                        (Some(new), Some(old)) => {
                            new > old || (new == old && candidate.hop_count < cur.hop_count)
                        }
                        (Some(_), None) => true,
                        (None, Some(_)) => false,
                        (None, None) => candidate.hop_count < cur.hop_count,
                    }
                };
                if better {
                    let precursors = std::mem::take(&mut cur.precursors);
                    *cur = RouteEntry {
                        precursors,
                        ..candidate
                    };
                    true
                } else if cur.next_hop == candidate.next_hop && cur.hop_count == candidate.hop_count
                {
                    cur.expires_at = cur.expires_at.max(candidate.expires_at);
                    false
                } else {
                    false
                }
            }
        }
    }

    /// Pushes the expiry of a usable route out to `now + lifetime`.
    pub fn refresh(&mut self, dest: NodeId, now: SimTime, lifetime: Duration) {
        if let Some(e) = self.entries.get_mut(&dest) {
            if e.usable(now) {
                e.expires_at = e.expires_at.max(now + lifetime);
            }
        }
    }

    pub fn add_precursor(&mut self, dest: NodeId, precursor: NodeId) {
        if let Some(e) = self.entries.get_mut(&dest) {
            e.precursors.insert(precursor);
        }
    }

    /// Invalidates every valid route whose next hop is `next_hop`. Returns
    /// the affected destinations with their precursor sets.
    pub fn invalidate_via(&mut self, next_hop: NodeId) -> Vec<(NodeId, BTreeSet<NodeId>)> {
        let mut out = Vec::new();
        for e in self.entries.values_mut() {
            if e.valid && e.next_hop == next_hop {
                e.valid = false;
                out.push((e.dest, std::mem::take(&mut e.precursors)));
            }
        }
        out
    }

    /// Invalidates the route to `dest` if it goes through `via`.
    pub fn invalidate_dest_via(&mut self, dest: NodeId, via: NodeId) -> Option<BTreeSet<NodeId>> {
        let e = self.entries.get_mut(&dest)?;
        if e.valid && e.next_hop == via {
            e.valid = false;
            Some(std::mem::take(&mut e.precursors))
        } else {
            None
        }
    }

    /// Sequence number last known for `dest`, valid or not.
    pub fn known_seq(&self, dest: NodeId) -> Option<u32> {
        self.entries.get(&dest).and_then(|e| e.dest_seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: u64) -> SimTime {
        SimTime::from_secs(s)
    }

    #[test]
    fn lookup_hits_only_live_entries() {
        let mut rt = RouteTable::default();
        assert_eq!(rt.lookup(NodeId(0), t(0)), None);
        rt.offer(
            RouteEntry::new(NodeId(0), NodeId(7), 2, Some(1), t(10)),
            t(0),
        );
        assert_eq!(rt.lookup(NodeId(0), t(5)), Some(NodeId(7)));
        assert_eq!(rt.lookup(NodeId(0), t(10)), None);
    }

    #[test]
    fn fresher_or_shorter_routes_win() {
        let mut rt = RouteTable::default();
        rt.offer(
            RouteEntry::new(NodeId(0), NodeId(1), 3, Some(5), t(10)),
            t(0),
        );
        assert!(!rt.offer(
            RouteEntry::new(NodeId(0), NodeId(2), 2, Some(4), t(10)),
            t(0)
        ));
        assert!(rt.offer(
            RouteEntry::new(NodeId(0), NodeId(2), 2, Some(5), t(10)),
            t(0)
        ));
        assert_eq!(rt.lookup(NodeId(0), t(1)), Some(NodeId(2)));
        assert!(rt.offer(
            RouteEntry::new(NodeId(0), NodeId(3), 6, Some(6), t(10)),
            t(0)
        ));
        assert_eq!(rt.lookup(NodeId(0), t(1)), Some(NodeId(3)));
    }

    #[test]
    fn invalidation_reports_precursors() {
        let mut rt = RouteTable::default();
        rt.offer(
            RouteEntry::new(NodeId(0), NodeId(4), 2, Some(1), t(10)),
            t(0),
        );
        rt.offer(
            RouteEntry::new(NodeId(9), NodeId(4), 3, Some(1), t(10)),
            t(0),
        );
        rt.offer(RouteEntry::new(NodeId(8), NodeId(5), 1, None, t(10)), t(0));
        rt.add_precursor(NodeId(0), NodeId(2));
        rt.add_precursor(NodeId(9), NodeId(3));
        let broken = rt.invalidate_via(NodeId(4));
        assert_eq!(broken.len(), 2);
        assert!(broken[0].1.contains(&NodeId(2)));
        assert!(broken[1].1.contains(&NodeId(3)));
        assert_eq!(rt.lookup(NodeId(0), t(1)), None);
        assert_eq!(rt.lookup(NodeId(8), t(1)), Some(NodeId(5)));
        assert!(rt.invalidate_via(NodeId(4)).is_empty());
        assert!(rt.invalidate_via(NodeId(42)).is_empty());
    }
}
