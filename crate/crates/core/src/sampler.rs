//! Independent configurations on a box, sampled one displacement class at a time.
//!
//! All pairs `{u, u + v}` share the probability `p_v`, so each class is handled as a
//! block: the class draws i.i.d. exponential clocks `E_i` for its `M_v` pairs and
//! opens exactly those with `E_i <= beta * J(v)`. The clocks are generated in
//! increasing order (exponential spacings) and each is attached to a fresh uniformly
//! chosen pair, so only the `K ~ Binomial(M_v, p_v)` open pairs are ever touched.
//! Because the clock sequence of a class depends only on its stream key, raising
//! `beta` with the same seed yields a superset configuration.

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::kernel::{open_probability, sup_norm, KernelSpec};
use crate::lattice::{is_lex_positive, BoxLattice, Site, MAX_DIM};
use crate::rng::{mix64, StreamKey};

/// All pairs of the box that share one canonical displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementClass {
    /// Lexicographically positive representative of `{v, -v}`.
    pub v: Site,
    pub pair_count: u64,
    pub probability: f64,
    /// `beta * J(v)`, the clock threshold.
    pub weight: f64,
}

impl DisplacementClass {
    pub fn displacement(&self, d: usize) -> &[i64] {
        &self.v[..d]
    }
}

/// One sampled open-edge set.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub lattice: BoxLattice,
    /// Unordered vertex-index pairs, smaller index first.
    pub open_edges: Vec<(u32, u32)>,
    pub beta: f64,
    pub seed: u64,
    pub replica: u64,
}

/// Classes with nonzero pair count and probability, canonical order.
pub fn enumerate_displacement_classes(
    lattice: &BoxLattice,
    spec: &KernelSpec<f64>,
    beta: f64,
) -> Result<Vec<DisplacementClass>> {
    let plan = SamplingPlan::new(spec, beta, lattice)?;
    Ok(plan
        .classes
        .iter()
        .map(|c| DisplacementClass {
            v: c.v,
            pair_count: c.pairs,
            probability: open_probability(c.weight),
            weight: c.weight,
        })
        .collect())
}

/// `sum_v M_v p_v`.
pub fn expected_open_edges(spec: &KernelSpec<f64>, beta: f64, lattice: &BoxLattice) -> Result<f64> {
    let plan = SamplingPlan::new(spec, beta, lattice)?;
    Ok(plan.expected_open_edges())
}

pub fn sample_configuration(
    spec: &KernelSpec<f64>,
    beta: f64,
    lattice: &BoxLattice,
    seed: u64,
    replica: u64,
) -> Result<Configuration> {
    Ok(SamplingPlan::new(spec, beta, lattice)?.sample(seed, replica))
}

#[derive(Clone, Debug)]
struct PlannedClass {
    v: Site,
    pairs: u64,
    weight: f64,
    tag: u64,
    /// Per coordinate: first admissible `u_j` and number of admissible values.
    start: [i64; MAX_DIM],
    len: [u64; MAX_DIM],
}

/// Everything about `(spec, beta, box)` that does not depend on the replica.
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    lattice: BoxLattice,
    beta: f64,
    classes: Vec<PlannedClass>,
}

impl SamplingPlan {
    pub fn new(spec: &KernelSpec<f64>, beta: f64, lattice: &BoxLattice) -> Result<Self> {
        spec.validate()?;
        if spec.d != lattice.dim() {
            return Err(Error::param(
                "d",
                format!("kernel has d={} but box has d={}", spec.d, lattice.dim()),
            ));
        }
        if !(beta >= 0.0) {
            return Err(Error::param("beta", format!("must be nonnegative, got {beta}")));
        }
        let d = lattice.dim();
        let n = lattice.radius() as i64;
        let side = lattice.side();
        let mut classes = Vec::new();
        if beta > 0.0 {
            // v ranges over [-2n, 2n]^d; only the lexicographically positive half.
            let span = (4 * n + 1) as u64;
            let total = span.pow(d as u32);
            for lin in (total - 1) / 2 + 1..total {
                let mut v = [0i64; MAX_DIM];
                let mut rest = lin;
                for j in (0..d).rev() {
                    v[j] = (rest % span) as i64 - 2 * n;
                    rest /= span;
                }
                debug_assert!(is_lex_positive(&v[..d]));
                let r = sup_norm(&v[..d]);
                if !spec.admits_length(r) {
                    continue;
                }
                let weight = beta * spec.kernel_at(r);
                if !(weight > 0.0) {
                    continue;
                }
                let mut start = [0i64; MAX_DIM];
                let mut len = [1u64; MAX_DIM];
                for j in 0..d {
                    start[j] = -n + (-v[j]).max(0);
                    len[j] = side - v[j].unsigned_abs();
                }
                let pairs = len[..d].iter().product();
                classes.push(PlannedClass {
                    v,
                    pairs,
                    weight,
                    tag: class_tag(&v),
                    start,
                    len,
                });
            }
        }
        Ok(SamplingPlan {
            lattice: *lattice,
            beta,
            classes,
        })
    }

    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn expected_open_edges(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.pairs as f64 * open_probability(c.weight))
            .sum()
    }

    /// Deterministic in `(plan, seed, replica)`.
    pub fn sample(&self, seed: u64, replica: u64) -> Configuration {
        let mut open_edges = Vec::with_capacity(self.expected_open_edges().ceil() as usize + 16);
        self.sample_into(seed, replica, &mut open_edges);
        Configuration {
            lattice: self.lattice,
            open_edges,
            beta: self.beta,
            seed,
            replica,
        }
    }

    /// As [`sample`](Self::sample), reusing `edges`' allocation.
    pub fn sample_into(&self, seed: u64, replica: u64, edges: &mut Vec<(u32, u32)>) {
        edges.clear();
        let replica_key = replica_key(seed, replica);
        let mut chosen = DistinctIndices::default();
        for class in &self.classes {
            let mut rng = replica_key.child(class.tag).stream();
            let m = class.pairs;
            let mut clock = 0.0f64;
            let mut k = 0u64;
            chosen.clear();
            while k < m {
                clock += rng.exp1() / (m - k) as f64;
                if !(clock <= class.weight) {
                    break;
                }
                let idx = loop {
                    let i = rng.below(m);
                    if chosen.insert(i) {
                        break i;
                    }
                };
                edges.push(self.decode(class, idx));
                k += 1;
            }
        }
    }

    #[inline]
    fn decode(&self, class: &PlannedClass, mut idx: u64) -> (u32, u32) {
        let d = self.lattice.dim();
        let mut u = [0i64; MAX_DIM];
        for j in (0..d).rev() {
            u[j] = class.start[j] + (idx % class.len[j]) as i64;
            idx /= class.len[j];
        }
        let mut w = u;
        for j in 0..d {
            w[j] += class.v[j];
        }
        let a = self.lattice.index_unchecked(&u) as u32;
        let b = self.lattice.index_unchecked(&w) as u32;
        (a.min(b), a.max(b))
    }
}

pub(crate) fn replica_key(seed: u64, replica: u64) -> StreamKey {
    StreamKey::root(seed).child(replica)
}

fn class_tag(v: &Site) -> u64 {
    v.iter()
        .fold(0x636c_6173_7300_0000u64, |h, &c| mix64(h ^ (c as u64)))
}

/// Set of drawn pair indices; linear scan while small.
#[derive(Default)]
struct DistinctIndices {
    small: Vec<u64>,
    large: HashSet<u64>,
}

impl DistinctIndices {
    const SMALL: usize = 32;

    fn clear(&mut self) {
        self.small.clear();
        self.large.clear();
    }

    #[inline]
    fn insert(&mut self, i: u64) -> bool {
        if self.small.len() < Self::SMALL {
            if self.small.contains(&i) {
                return false;
            }
            self.small.push(i);
            return true;
        }
        if self.large.is_empty() {
            self.large.extend(self.small.iter().copied());
        }
        self.large.insert(i)
    }
}

impl Configuration {
    /// Debug dump: header `d, n, beta, seed, replica, edge count` then sorted pairs,
    /// all 64-bit little-endian.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let mut edges = self.open_edges.clone();
        edges.sort_unstable();
        out.write_all(&(self.lattice.dim() as u64).to_le_bytes())?;
        out.write_all(&self.lattice.radius().to_le_bytes())?;
        out.write_all(&self.beta.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&self.replica.to_le_bytes())?;
        out.write_all(&(edges.len() as u64).to_le_bytes())?;
        for (a, b) in edges {
            out.write_all(&(a as u64).to_le_bytes())?;
            out.write_all(&(b as u64).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        let mut word = || -> Result<u64> {
            let mut buf = [0u8; 8];
            input.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf))
        };
        let d = word()? as usize;
        let n = word()?;
        let beta = f64::from_bits(word()?);
        let seed = word()?;
        let replica = word()?;
        let count = word()?;
        let lattice = BoxLattice::new(d, n)?;
        let v = lattice.vertex_count() as u64;
        let mut open_edges = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let (a, b) = (word()?, word()?);
            if a >= b || b >= v {
                return Err(Error::Parse(format!("bad edge ({a}, {b}) in dump")));
            }
            open_edges.push((a as u32, b as u32));
        }
        Ok(Configuration {
            lattice,
            open_edges,
            beta,
            seed,
            replica,
        })
    }
}
