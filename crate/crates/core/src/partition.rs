//! Nested binary supports `S_{n,k} = [l, r]` with split points `m`.

use crate::error::{GmsError, Result};
use std::fmt;
use std::sync::Arc;

/// Index `(n, k)`; `(0, 0)` is the root element on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeIndex {
    pub n: u32,
    pub k: u64,
}

impl NodeIndex {
    pub const ROOT: NodeIndex = NodeIndex { n: 0, k: 0 };

    pub fn new(n: u32, k: u64) -> Self {
        Self { n, k }
    }

    /// Position in recursive dyadic order: root, (1,0), (2,0), (2,1), (3,0), ...
    pub fn flat(self) -> usize {
        if self.n == 0 {
            0
        } else {
            (1usize << (self.n - 1)) + self.k as usize
        }
    }

    pub fn from_flat(i: usize) -> Self {
        if i == 0 {
            return Self::ROOT;
        }
        let n = usize::BITS - i.leading_zeros();
        Self {
            n,
            k: (i - (1usize << (n - 1))) as u64,
        }
    }

    pub fn parent(self) -> Option<Self> {
        match self.n {
            0 => None,
            1 => Some(Self::ROOT),
            n => Some(Self::new(n - 1, self.k / 2)),
        }
    }

    pub fn children(self) -> (Self, Self) {
        match self.n {
            0 => (Self::new(1, 0), Self::new(1, 0)),
            n => (
                Self::new(n + 1, 2 * self.k),
                Self::new(n + 1, 2 * self.k + 1),
            ),
        }
    }

    pub fn is_root(self) -> bool {
        self.n == 0
    }
}

impl fmt::Display for NodeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n, self.k)
    }
}

/// Number of elements with level below `depth` (root included): `2^{depth-1}`.
pub fn element_count(depth: u32) -> usize {
    if depth == 0 {
        0
    } else {
        1usize << (depth - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Support {
    pub l: f64,
    pub m: f64,
    pub r: f64,
}

impl Support {
    pub fn width(&self) -> f64 {
        self.r - self.l
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.l && t <= self.r
    }
}

pub type MidpointRule = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PartitionKind {
    Dyadic,
    Custom(MidpointRule),
}

impl fmt::Debug for PartitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dyadic => write!(f, "Dyadic"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Default balance bound.
pub const DEFAULT_RHO: f64 = 0.75;

#[derive(Clone, Debug)]
pub struct SupportTree {
    depth: u32,
    rho: f64,
    kind: PartitionKind,
    /// Flat-indexed supports; slot 0 is the root `[0, 1]` with split point 1.
    supports: Vec<Support>,
}

impl SupportTree {
    pub fn dyadic(depth: u32) -> Result<Self> {
        Self::build(depth, PartitionKind::Dyadic, DEFAULT_RHO)
    }

    /// Builds levels `1..=depth`.
    pub fn build(depth: u32, kind: PartitionKind, rho: f64) -> Result<Self> {
        if depth < 1 {
            return Err(GmsError::Range("partition depth must be at least 1".into()));
        }
        if depth > 40 {
            return Err(GmsError::Range(format!(
                "partition depth {depth} is too large"
            )));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(GmsError::Range(format!(
                "rho must lie in (0, 1), got {rho}"
            )));
        }
        let count = 1usize << depth;
        let mut supports = Vec::with_capacity(count);
        supports.push(Support {
            l: 0.0,
            m: 1.0,
            r: 1.0,
        });
        for i in 1..count {
            let idx = NodeIndex::from_flat(i);
            let (l, r) = if idx.n == 1 {
                (0.0, 1.0)
            } else {
                let p = supports[idx.parent().unwrap().flat()];
                if idx.k.is_multiple_of(2) {
                    (p.l, p.m)
                } else {
                    (p.m, p.r)
                }
            };
            let m = match &kind {
                PartitionKind::Dyadic => {
                    let scale = (-(idx.n as f64)).exp2();
                    (2 * idx.k + 1) as f64 * scale
                }
                PartitionKind::Custom(rule) => rule(l, r),
            };
            let child = (r - m).max(m - l);
            if !(m > l && m < r) || child >= rho * (r - l) {
                return Err(GmsError::Partition {
                    n: idx.n,
                    k: idx.k,
                    child,
                    parent: r - l,
                });
            }
            supports.push(Support { l, m, r });
        }
        Ok(Self {
            depth,
            rho,
            kind,
            supports,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn kind(&self) -> &PartitionKind {
        &self.kind
    }

    pub fn is_dyadic(&self) -> bool {
        matches!(self.kind, PartitionKind::Dyadic)
    }

    pub fn support(&self, idx: NodeIndex) -> Result<Support> {
        if idx.n > self.depth
            || (idx.n > 0 && idx.k >= 1u64 << (idx.n - 1))
            || (idx.n == 0 && idx.k != 0)
        {
            return Err(GmsError::Range(format!(
                "node {idx} is outside a tree of depth {}",
                self.depth
            )));
        }
        Ok(self.supports[idx.flat()])
    }

    /// Support of a flat index (no range check beyond slice bounds).
    pub fn support_flat(&self, i: usize) -> Support {
        self.supports[i]
    }

    /// Indices with level `n <= max_level` in recursive dyadic order.
    pub fn indices(&self, max_level: u32) -> impl Iterator<Item = NodeIndex> {
        (0..(1usize << max_level.min(self.depth))).map(NodeIndex::from_flat)
    }

    /// Sorted grid `D_N`: `{0, 1}` and split points of levels `1..N-1`.
    pub fn endpoints(&self, n: u32) -> Result<Vec<f64>> {
        if n < 1 || n > self.depth + 1 {
            return Err(GmsError::Range(format!(
                "grid level {n} exceeds what a tree of depth {} covers",
                self.depth
            )));
        }
        let mut pts: Vec<f64> = vec![0.0, 1.0];
        pts.extend((1..element_count(n)).map(|i| self.supports[i].m));
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(pts)
    }

    /// Chain of nodes from the root down to level `max_level` whose supports contain `t`.
    pub fn ancestors(&self, t: f64, max_level: u32) -> Vec<NodeIndex> {
        let mut out = vec![NodeIndex::ROOT];
        let mut idx = NodeIndex::new(1, 0);
        while idx.n <= max_level.min(self.depth) {
            out.push(idx);
            let s = self.supports[idx.flat()];
            let (a, b) = idx.children();
            idx = if t < s.m { a } else { b };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_round_trip() {
        for i in 0..4096 {
            assert_eq!(NodeIndex::from_flat(i).flat(), i);
        }
        assert_eq!(NodeIndex::from_flat(3), NodeIndex::new(2, 1));
        assert_eq!(NodeIndex::from_flat(4), NodeIndex::new(3, 0));
    }

    #[test]
    fn dyadic_examples() {
        let t = SupportTree::dyadic(1).unwrap();
        assert_eq!(
            t.support(NodeIndex::new(1, 0)).unwrap(),
            Support {
                l: 0.0,
                m: 0.5,
                r: 1.0
            }
        );
        let t = SupportTree::dyadic(3).unwrap();
        assert_eq!(
            t.support(NodeIndex::new(3, 2)).unwrap(),
            Support {
                l: 0.5,
                m: 0.625,
                r: 0.75
            }
        );
        assert!(t.support(NodeIndex::new(4, 0)).is_err());
    }

    #[test]
    fn custom_rule_violation_names_node() {
        let err = SupportTree::build(
            3,
            PartitionKind::Custom(Arc::new(|l, r| l + 0.9 * (r - l))),
            0.8,
        )
        .unwrap_err();
        assert!(err.to_string().contains("(1,0)"));
    }

    #[test]
    fn endpoint_examples() {
        let t = SupportTree::dyadic(5).unwrap();
        assert_eq!(t.endpoints(1).unwrap(), vec![0.0, 1.0]);
        assert_eq!(t.endpoints(2).unwrap(), vec![0.0, 0.5, 1.0]);
        let d4 = t.endpoints(4).unwrap();
        assert_eq!(d4, (0..9).map(|k| k as f64 / 8.0).collect::<Vec<_>>());
        assert!(t.endpoints(7).is_err());
    }

    #[test]
    fn ancestors_walk() {
        let t = SupportTree::dyadic(3).unwrap();
        let a = t.ancestors(0.6, 3);
        assert_eq!(
            a,
            vec![
                NodeIndex::ROOT,
                NodeIndex::new(1, 0),
                NodeIndex::new(2, 1),
                NodeIndex::new(3, 2)
            ]
        );
    }
}
