//! Replica loop: sample, label clusters, count connected pairs in the window.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::fft::{fft_len, GridFft};
use super::{BatchPartial, TailTable, TwoPointTable};
use crate::clusters::ClusterForest;
use crate::error::{Error, Result};
use crate::kernel::{sup_norm, KernelSpec};
use crate::lattice::{BoxLattice, DisplacementGrid, Site, MAX_DIM};
use crate::sampler::{Configuration, SamplingPlan};

/// Batch count used for error bars and bootstrap.
pub const DEFAULT_BATCHES: usize = 32;

const NONE: u32 = u32::MAX;

/// Mean with standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// One Monte Carlo run at fixed `(spec, beta, box)`.
#[derive(Clone, Debug)]
pub struct EnsembleRequest<'a> {
    pub spec: &'a KernelSpec<f64>,
    pub beta: f64,
    pub lattice: BoxLattice,
    pub inner_radius: u64,
    pub replicas: u64,
    pub seed: u64,
    /// Replica indices used are `offset..offset + replicas`.
    pub replica_offset: u64,
    pub batches: usize,
}

impl<'a> EnsembleRequest<'a> {
    pub fn new(
        spec: &'a KernelSpec<f64>,
        beta: f64,
        lattice: BoxLattice,
        inner_radius: u64,
        replicas: u64,
        seed: u64,
    ) -> Self {
        EnsembleRequest {
            spec,
            beta,
            lattice,
            inner_radius,
            replicas,
            seed,
            replica_offset: 0,
            batches: DEFAULT_BATCHES,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleSummary {
    pub beta: f64,
    pub table: TwoPointTable,
    pub tail: TailTable,
    /// Mean over window vertices of `|K(u) ∩ window|`.
    pub window_mass: Estimate,
    pub largest_cluster: u64,
    pub mean_open_edges: f64,
}

/// Powers of two up to `max`.
pub fn dyadic_thresholds(max: u64) -> Vec<u64> {
    std::iter::successors(Some(1u64), |t| t.checked_mul(2))
        .take_while(|&t| t <= max.max(1))
        .collect()
}

/// Read-only geometry shared by all workers.
struct Geometry {
    window: BoxLattice,
    grid: DisplacementGrid,
    window_to_box: Vec<u32>,
    window_sites: Vec<Site>,
    thresholds: Vec<u64>,
    fft_side: usize,
    fft_cutover: f64,
}

impl Geometry {
    fn new(lattice: &BoxLattice, m: u64, thresholds: Vec<u64>) -> Result<Self> {
        if m == 0 || m > lattice.radius() {
            return Err(Error::param(
                "inner_radius",
                format!("must lie in 1..={}, got {m}", lattice.radius()),
            ));
        }
        let d = lattice.dim();
        let window = BoxLattice::new(d, m)?;
        let grid = DisplacementGrid::new(d, m)?;
        let window_sites: Vec<Site> = window.sites().collect();
        let window_to_box = window_sites
            .iter()
            .map(|s| lattice.index_unchecked(s) as u32)
            .collect();
        // Lags up to m of a signal supported on 2m + 1 points need no wraparound at 3m + 1.
        let fft_side = fft_len(3 * m as usize + 1);
        let volume = fft_side.pow(d as u32) as f64;
        let fft_cutover = 6.0 * volume * volume.log2().max(1.0) + grid.len() as f64;
        Ok(Geometry {
            window,
            grid,
            window_to_box,
            window_sites,
            thresholds,
            fft_side,
            fft_cutover,
        })
    }
}

/// Exact integer moments over a set of replicas.
#[derive(Clone, Debug)]
struct Sums {
    replicas: u64,
    hits: Vec<u64>,
    hits_sq: Vec<u128>,
    tail: Vec<u64>,
    tail_sq: Vec<u128>,
    mass: u128,
    mass_sq: u128,
    largest: u64,
    edges: u64,
}

impl Sums {
    fn new(geo: &Geometry) -> Self {
        Sums {
            replicas: 0,
            hits: vec![0; geo.grid.len()],
            hits_sq: vec![0; geo.grid.len()],
            tail: vec![0; geo.thresholds.len()],
            tail_sq: vec![0; geo.thresholds.len()],
            mass: 0,
            mass_sq: 0,
            largest: 0,
            edges: 0,
        }
    }

    fn add(&mut self, one: &Scratch) {
        self.replicas += 1;
        for ((h, q), &x) in self.hits.iter_mut().zip(&mut self.hits_sq).zip(&one.hits) {
            *h += x;
            *q += (x as u128) * (x as u128);
        }
        for ((t, q), &x) in self.tail.iter_mut().zip(&mut self.tail_sq).zip(&one.tail) {
            *t += x;
            *q += (x as u128) * (x as u128);
        }
        self.mass += one.mass as u128;
        self.mass_sq += (one.mass as u128) * (one.mass as u128);
        self.largest = self.largest.max(one.largest);
        self.edges += one.edges.len() as u64;
    }

    fn merge(mut self, other: Sums) -> Sums {
        self.replicas += other.replicas;
        for (a, b) in self.hits.iter_mut().zip(other.hits) {
            *a += b;
        }
        for (a, b) in self.hits_sq.iter_mut().zip(other.hits_sq) {
            *a += b;
        }
        for (a, b) in self.tail.iter_mut().zip(other.tail) {
            *a += b;
        }
        for (a, b) in self.tail_sq.iter_mut().zip(other.tail_sq) {
            *a += b;
        }
        self.mass += other.mass;
        self.mass_sq += other.mass_sq;
        self.largest = self.largest.max(other.largest);
        self.edges += other.edges;
        self
    }
}

/// Per-worker buffers and the measurement of the current configuration.
struct Scratch {
    edges: Vec<(u32, u32)>,
    head: Vec<u32>,
    next: Vec<u32>,
    roots: Vec<u32>,
    members: Vec<u32>,
    hits: Vec<u64>,
    tail: Vec<u64>,
    mass: u64,
    largest: u64,
    fft: Option<(GridFft, Vec<Complex64>)>,
}

impl Scratch {
    fn new(geo: &Geometry, vertex_count: usize) -> Self {
        Scratch {
            edges: Vec::new(),
            head: vec![NONE; vertex_count],
            next: vec![NONE; geo.window.vertex_count()],
            roots: Vec::new(),
            members: Vec::new(),
            hits: vec![0; geo.grid.len()],
            tail: vec![0; geo.thresholds.len()],
            mass: 0,
            largest: 0,
            fft: None,
        }
    }

    /// Measures the configuration whose open edges are in `self.edges`.
    fn measure(&mut self, geo: &Geometry, lattice: BoxLattice) {
        let mut forest = ClusterForest::singletons(lattice);
        for &(a, b) in &self.edges {
            forest.union(a as usize, b as usize);
        }
        forest.compress();
        self.measure_forest(geo, &forest);
    }

    fn measure_forest(&mut self, geo: &Geometry, forest: &ClusterForest) {
        self.hits.fill(0);
        self.tail.fill(0);
        self.mass = 0;
        self.largest = forest.largest_cluster() as u64;

        // Bucket window vertices by root; descending insertion keeps lists ascending.
        for w in (0..geo.window_to_box.len()).rev() {
            let root = forest.root(geo.window_to_box[w] as usize);
            if self.head[root] == NONE {
                self.roots.push(root as u32);
            }
            self.next[w] = self.head[root];
            self.head[root] = w as u32;
        }

        let roots = std::mem::take(&mut self.roots);
        for &root in &roots {
            self.members.clear();
            let mut w = self.head[root as usize];
            while w != NONE {
                self.members.push(w);
                w = self.next[w as usize];
            }
            self.head[root as usize] = NONE;

            let s = self.members.len() as u64;
            let total = forest.root_size(root as usize) as u64;
            self.mass += s * s;
            for (t, &thr) in self.tail.iter_mut().zip(&geo.thresholds) {
                if thr <= total {
                    *t += s;
                }
            }
            if s >= 2 {
                if (s as f64) * (s as f64) / 2.0 > geo.fft_cutover {
                    self.pairs_by_fft(geo);
                } else {
                    self.pairs_direct(geo);
                }
            }
        }
        self.roots = roots;
        self.roots.clear();
    }

    fn pairs_direct(&mut self, geo: &Geometry) {
        let d = geo.window.dim();
        let m = geo.grid.radius() as i64;
        let members = &self.members;
        if d == 1 {
            for (i, &a) in members.iter().enumerate() {
                let xa = geo.window_sites[a as usize][0];
                for &b in &members[i + 1..] {
                    let lag = geo.window_sites[b as usize][0] - xa;
                    if lag > m {
                        break;
                    }
                    self.hits[lag as usize] += 1;
                }
            }
            return;
        }
        for (i, &a) in members.iter().enumerate() {
            let sa = geo.window_sites[a as usize];
            for &b in &members[i + 1..] {
                let sb = geo.window_sites[b as usize];
                let mut v = [0i64; MAX_DIM];
                for j in 0..d {
                    v[j] = sb[j] - sa[j];
                }
                // Sorted by first coordinate, so a lag beyond m there ends the row.
                if v[0] > m {
                    break;
                }
                if sup_norm(&v[..d]) as i64 <= m {
                    self.hits[geo.grid.index_unchecked(&v)] += 1;
                }
            }
        }
    }

    fn pairs_by_fft(&mut self, geo: &Geometry) {
        let d = geo.window.dim();
        let m = geo.grid.radius() as i64;
        let l = geo.fft_side;
        let (plan, buf) = self.fft.get_or_insert_with(|| {
            let plan = GridFft::new(d, l);
            let vol = plan.volume();
            (plan, vec![Complex64::default(); vol])
        });
        buf.fill(Complex64::default());
        for &w in &self.members {
            let s = geo.window_sites[w as usize];
            let pos = s[..d].iter().fold(0usize, |acc, &c| acc * l + (c + m) as usize);
            buf[pos] = Complex64::new(1.0, 0.0);
        }
        plan.forward(buf);
        for c in buf.iter_mut() {
            *c = Complex64::new(c.norm_sqr(), 0.0);
        }
        plan.inverse(buf);
        let scale = plan.volume() as f64;
        for k in 1..geo.grid.len() {
            let v = geo.grid.displacement(k);
            let pos = v[..d]
                .iter()
                .fold(0usize, |acc, &c| acc * l + c.rem_euclid(l as i64) as usize);
            self.hits[k] += (buf[pos].re / scale).round() as u64;
        }
    }
}

fn finish(geo: &Geometry, lattice: &BoxLattice, beta: f64, total: Sums, batches: Vec<BatchPartial>) -> EnsembleSummary {
    let r = total.replicas;
    let w = geo.window.vertex_count() as f64;
    let table = TwoPointTable::from_counts(geo.grid, lattice.radius(), r, &total.hits, &total.hits_sq, batches);
    let moment = |s1: u128, s2: u128| -> Estimate {
        let value = s1 as f64 / (r as f64 * w);
        let stderr = if r > 1 {
            let rr = r as u128;
            let num = (rr * s2 - s1 * s1) as f64;
            (num / (r * (r - 1)) as f64 / r as f64).sqrt() / w
        } else {
            f64::NAN
        };
        Estimate { value, stderr }
    };
    let mut tail = TailTable {
        thresholds: geo.thresholds.clone(),
        prob: Vec::new(),
        stderr: Vec::new(),
    };
    for (&s1, &s2) in total.tail.iter().zip(&total.tail_sq) {
        let e = moment(s1 as u128, s2);
        tail.prob.push(e.value);
        tail.stderr.push(e.stderr);
    }
    EnsembleSummary {
        beta,
        table,
        tail: tail.trimmed(total.largest),
        window_mass: moment(total.mass, total.mass_sq),
        largest_cluster: total.largest,
        mean_open_edges: total.edges as f64 / r as f64,
    }
}

fn batch_bounds(replicas: u64, batches: usize) -> Vec<(u64, u64)> {
    let b = (batches.max(1) as u64).min(replicas.max(1));
    (0..b)
        .map(|i| (i * replicas / b, (i + 1) * replicas / b))
        .collect()
}

/// Samples `replicas` configurations and accumulates every window observable.
pub fn run_ensemble(req: &EnsembleRequest<'_>) -> Result<EnsembleSummary> {
    if req.replicas == 0 {
        return Err(Error::EmptyBatch);
    }
    let plan = SamplingPlan::new(req.spec, req.beta, &req.lattice)?;
    let geo = Geometry::new(&req.lattice, req.inner_radius, dyadic_thresholds(req.lattice.vertex_count() as u64))?;
    let v = req.lattice.vertex_count();
    let mut total = Sums::new(&geo);
    let mut partials = Vec::new();
    for (lo, hi) in batch_bounds(req.replicas, req.batches) {
        let sums = (lo..hi)
            .into_par_iter()
            .fold(
                || (Scratch::new(&geo, v), Sums::new(&geo)),
                |(mut scratch, mut sums), i| {
                    let mut edges = std::mem::take(&mut scratch.edges);
                    plan.sample_into(req.seed, req.replica_offset + i, &mut edges);
                    scratch.edges = edges;
                    scratch.measure(&geo, req.lattice);
                    sums.add(&scratch);
                    (scratch, sums)
                },
            )
            .map(|(_, sums)| sums)
            .reduce(|| Sums::new(&geo), Sums::merge);
        partials.push(BatchPartial {
            replicas: sums.replicas,
            hits: sums.hits.clone(),
        });
        total = total.merge(sums);
    }
    Ok(finish(&geo, &req.lattice, req.beta, total, partials))
}

fn check_batch(configs: &[Configuration]) -> Result<&Configuration> {
    let first = configs.first().ok_or(Error::EmptyBatch)?;
    if configs
        .iter()
        .any(|c| c.lattice != first.lattice || c.beta.to_bits() != first.beta.to_bits())
    {
        return Err(Error::param("configs", "batch mixes boxes or beta values"));
    }
    Ok(first)
}

fn accumulate(configs: &[Configuration], geo: &Geometry) -> (Sums, Vec<BatchPartial>) {
    let first = &configs[0];
    let v = first.lattice.vertex_count();
    let mut scratch = Scratch::new(geo, v);
    let mut total = Sums::new(geo);
    let mut partials = Vec::new();
    for (lo, hi) in batch_bounds(configs.len() as u64, DEFAULT_BATCHES) {
        let mut sums = Sums::new(geo);
        for c in &configs[lo as usize..hi as usize] {
            scratch.edges.clear();
            scratch.edges.extend_from_slice(&c.open_edges);
            scratch.measure(geo, c.lattice);
            sums.add(&scratch);
        }
        partials.push(BatchPartial {
            replicas: sums.replicas,
            hits: sums.hits.clone(),
        });
        total = total.merge(sums);
    }
    (total, partials)
}

/// Translation-averaged `tau` over the window `[-m, m]^d` of a batch.
pub fn two_point_estimate(configs: &[Configuration], inner_radius: u64) -> Result<TwoPointTable> {
    let first = check_batch(configs)?;
    let geo = Geometry::new(&first.lattice, inner_radius, Vec::new())?;
    let (total, partials) = accumulate(configs, &geo);
    Ok(finish(&geo, &first.lattice, first.beta, total, partials).table)
}

/// `P(|K| >= t)` for the given thresholds, averaged over window vertices.
pub fn cluster_tail(configs: &[Configuration], thresholds: &[u64], inner_radius: u64) -> Result<TailTable> {
    let first = check_batch(configs)?;
    let geo = Geometry::new(&first.lattice, inner_radius, thresholds.to_vec())?;
    let (total, partials) = accumulate(configs, &geo);
    let mut tail = finish(&geo, &first.lattice, first.beta, total, partials).tail;
    // Keep exactly the requested grid.
    tail.thresholds = thresholds.to_vec();
    tail.prob.resize(thresholds.len(), 0.0);
    tail.stderr.resize(thresholds.len(), 0.0);
    Ok(tail)
}

/// Probability that `0` and `x` connect inside the box of radius `2|x|`.
pub fn restricted_two_point(
    spec: &KernelSpec<f64>,
    beta: f64,
    x: &[i64],
    replicas: u64,
    seed: u64,
) -> Result<Estimate> {
    let r = sup_norm(x);
    if r == 0 {
        return Err(Error::param("x", "must be nonzero"));
    }
    if replicas == 0 {
        return Err(Error::EmptyBatch);
    }
    let lattice = BoxLattice::new(spec.d, 2 * r)?;
    let target = lattice
        .index_of(x)
        .ok_or_else(|| Error::param("x", "dimension mismatch"))?;
    let origin = lattice.origin();
    let plan = SamplingPlan::new(spec, beta, &lattice)?;
    let hits: u64 = (0..replicas)
        .into_par_iter()
        .fold(
            || (Vec::new(), 0u64),
            |(mut edges, acc), i| {
                plan.sample_into(seed, i, &mut edges);
                let mut forest = ClusterForest::singletons(lattice);
                for &(a, b) in &edges {
                    forest.union(a as usize, b as usize);
                }
                let hit = forest.root(origin) == forest.root(target);
                (edges, acc + hit as u64)
            },
        )
        .map(|(_, acc)| acc)
        .sum();
    let p = hits as f64 / replicas as f64;
    Ok(Estimate {
        value: p,
        stderr: (p * (1.0 - p) / replicas as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::sample_configuration;

    fn spec(d: usize, alpha: f64) -> KernelSpec<f64> {
        KernelSpec::new(d, alpha, 1.0, None).unwrap()
    }

    fn configs(d: usize, n: u64, beta: f64, count: u64, seed: u64) -> Vec<Configuration> {
        let b = BoxLattice::new(d, n).unwrap();
        (0..count)
            .map(|i| sample_configuration(&spec(d, 0.6), beta, &b, seed, i).unwrap())
            .collect()
    }

    /// Brute-force connected-pair counts for one configuration.
    fn brute_hits(c: &Configuration, m: u64) -> Vec<u64> {
        let mut f = ClusterForest::singletons(c.lattice);
        for &(a, b) in &c.open_edges {
            f.union(a as usize, b as usize);
        }
        let grid = DisplacementGrid::new(c.lattice.dim(), m).unwrap();
        let window = BoxLattice::new(c.lattice.dim(), m).unwrap();
        let sites: Vec<Site> = window.sites().collect();
        let mut hits = vec![0u64; grid.len()];
        for i in 0..sites.len() {
            for j in i + 1..sites.len() {
                let mut v = [0i64; MAX_DIM];
                for k in 0..c.lattice.dim() {
                    v[k] = sites[j][k] - sites[i][k];
                }
                if let Some(k) = grid.index_of(&v) {
                    let a = c.lattice.index_of(&sites[i]).unwrap();
                    let b = c.lattice.index_of(&sites[j]).unwrap();
                    if f.root(a) == f.root(b) {
                        hits[k] += 1;
                    }
                }
            }
        }
        hits
    }

    #[test]
    fn direct_and_fft_counts_match_brute_force() {
        for (d, n, m, beta) in [(1, 40, 20, 0.6), (2, 8, 4, 1.2), (3, 3, 2, 2.0)] {
            let cs = configs(d, n, beta, 5, 17);
            let lattice = cs[0].lattice;
            for cutover in [f64::INFINITY, 0.0] {
                let mut geo = Geometry::new(&lattice, m, vec![1, 2, 4]).unwrap();
                geo.fft_cutover = cutover;
                let mut scratch = Scratch::new(&geo, lattice.vertex_count());
                for c in &cs {
                    scratch.edges = c.open_edges.clone();
                    scratch.measure(&geo, lattice);
                    let mut expect = brute_hits(c, m);
                    expect[0] = 0;
                    assert_eq!(scratch.hits, expect, "d={d} cutover={cutover}");
                }
            }
        }
    }

    #[test]
    fn beta_zero_table() {
        let cs = configs(1, 10, 0.0, 4, 1);
        let t = two_point_estimate(&cs, 5).unwrap();
        assert_eq!(t.values()[0], 1.0);
        assert!(t.values()[1..].iter().all(|&v| v == 0.0));
        let tail = cluster_tail(&cs, &[1, 2], 5).unwrap();
        assert_eq!(tail.prob, vec![1.0, 0.0]);
    }

    #[test]
    fn huge_beta_table_is_all_ones() {
        let cs = configs(2, 3, 1e12, 3, 1);
        let t = two_point_estimate(&cs, 3).unwrap();
        assert!(t.values().iter().all(|&v| v == 1.0));
        let tail = cluster_tail(&cs, &[49], 3).unwrap();
        assert_eq!(tail.prob, vec![1.0]);
    }

    #[test]
    fn empty_and_mixed_batches_rejected() {
        assert!(matches!(two_point_estimate(&[], 1), Err(Error::EmptyBatch)));
        let mut cs = configs(1, 6, 0.5, 2, 1);
        cs.extend(configs(1, 6, 0.7, 1, 1));
        assert!(two_point_estimate(&cs, 3).is_err());
        assert!(two_point_estimate(&configs(1, 6, 0.5, 2, 1), 7).is_err());
    }

    #[test]
    fn ensemble_matches_explicit_batch() {
        let s = spec(1, 0.6);
        let b = BoxLattice::new(1, 30).unwrap();
        let req = EnsembleRequest::new(&s, 0.4, b, 15, 40, 9);
        let summary = run_ensemble(&req).unwrap();
        let cs: Vec<Configuration> = (0..40).map(|i| sample_configuration(&s, 0.4, &b, 9, i).unwrap()).collect();
        let t = two_point_estimate(&cs, 15).unwrap();
        assert_eq!(summary.table.values(), t.values());
        assert_eq!(summary.table.stderrs(), t.stderrs());
    }

    #[test]
    fn restricted_two_point_beta_zero() {
        let e = restricted_two_point(&spec(1, 0.6), 0.0, &[3], 100, 1).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(restricted_two_point(&spec(1, 0.6), 0.1, &[0], 10, 1).is_err());
    }

    #[test]
    fn thresholds_are_dyadic() {
        assert_eq!(dyadic_thresholds(1), vec![1]);
        assert_eq!(dyadic_thresholds(9), vec![1, 2, 4, 8]);
    }
}
