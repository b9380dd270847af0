//! Essential value certificates on finite cyclic systems.
//!
//! Every certificate here is a statement about a finite cyclic system
//! `x -> x + 1 mod Q` with counting measure; truncated odometers and lattice
//! rotations both map onto it. Measures are exact rationals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{self, Measure};
use crate::odometer::{OdometerSpec, ProductCocycle, Section6};

/// Windows are shrunk by this much before membership tests.
pub const WINDOW_SHRINK: f64 = 1e-9;

/// Default mass ratio for the rigid condition.
pub fn default_rigid_ratio() -> Measure {
    measure::ratio(1, 25)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicSystem {
    order: u64,
}

impl CyclicSystem {
    pub fn new(order: u64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidSystem("order must be positive".into()));
        }
        Ok(Self { order })
    }

    pub fn from_odometer(spec: &OdometerSpec) -> Result<Self> {
        Self::new(spec.period_u64()?)
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn step(&self, x: u64, n: u64) -> u64 {
        ((x as u128 + n as u128) % self.order as u128) as u64
    }

    pub fn mass(&self, count: u64) -> Measure {
        measure::ratio(count, self.order)
    }
}

/// A real cocycle over `x -> x + 1`, given through its Birkhoff sums.
pub trait Cocycle {
    /// `phi_n(x) = sum_{i<n} phi(x + i)`.
    fn birkhoff(&self, x: u64, n: u64) -> f64;

    fn value(&self, x: u64) -> f64 {
        self.birkhoff(x, 1)
    }
}

impl<C: Cocycle + ?Sized> Cocycle for &C {
    fn birkhoff(&self, x: u64, n: u64) -> f64 {
        (**self).birkhoff(x, n)
    }
}

impl<C: Cocycle + ?Sized> Cocycle for Box<C> {
    fn birkhoff(&self, x: u64, n: u64) -> f64 {
        (**self).birkhoff(x, n)
    }
}

/// Cocycle given by its table of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    values: Vec<f64>,
    prefix: Vec<f64>,
}

/// Below this length Birkhoff sums are summed directly rather than through prefix sums.
const DIRECT_SUM_LIMIT: u64 = 256;

impl Tabulated {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSystem("empty value table".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cocycle table"));
        }
        let mut prefix = Vec::with_capacity(values.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for v in &values {
            acc += v;
            prefix.push(acc);
        }
        Ok(Self { values, prefix })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn segment(&self, from: usize, len: usize) -> f64 {
        let q = self.values.len();
        if from + len <= q {
            self.prefix[from + len] - self.prefix[from]
        } else {
            (self.prefix[q] - self.prefix[from]) + self.prefix[from + len - q]
        }
    }
}

impl Cocycle for Tabulated {
    fn birkhoff(&self, x: u64, n: u64) -> f64 {
        let q = self.values.len() as u64;
        let x = x % q;
        if n <= DIRECT_SUM_LIMIT {
            return (0..n).map(|i| self.values[((x + i) % q) as usize]).sum();
        }
        let full = n / q;
        let rest = n % q;
        full as f64 * self.prefix[q as usize] + self.segment(x as usize, rest as usize)
    }

    fn value(&self, x: u64) -> f64 {
        self.values[(x % self.values.len() as u64) as usize]
    }
}

/// `h(x + 1) - h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coboundary {
    transfer: Vec<f64>,
}

impl Coboundary {
    pub fn new(transfer: Vec<f64>) -> Result<Self> {
        if transfer.is_empty() {
            return Err(Error::InvalidSystem("empty transfer function".into()));
        }
        if transfer.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transfer function"));
        }
        Ok(Self { transfer })
    }

    pub fn transfer(&self) -> &[f64] {
        &self.transfer
    }

    pub fn sup_abs(&self) -> f64 {
        self.transfer.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

impl Cocycle for Coboundary {
    fn birkhoff(&self, x: u64, n: u64) -> f64 {
        let q = self.transfer.len() as u64;
        let x = x % q;
        self.transfer[((x + n % q) % q) as usize] - self.transfer[x as usize]
    }
}

/// Product-type cocycle of a truncated odometer, addressed by point index.
#[derive(Debug, Clone, Copy)]
pub struct OdometerCocycle<'a> {
    pub spec: &'a OdometerSpec,
    pub cocycle: &'a ProductCocycle,
}

impl Cocycle for OdometerCocycle<'_> {
    fn birkhoff(&self, x: u64, n: u64) -> f64 {
        let q = self.spec.period();
        let mut a = x as u128 % q;
        let mut b = (a + n as u128 % q) % q;
        let mut total = 0.0;
        for (beta, &d) in self.cocycle.betas().iter().zip(self.spec.digits()) {
            if a == b {
                break;
            }
            let d = d as u128;
            let (xa, xb) = ((a % d) as usize, (b % d) as usize);
            if xa != xb {
                total += beta[xb] - beta[xa];
            }
            a /= d;
            b /= d;
        }
        total
    }
}

/// Pointwise sum of two cocycles.
#[derive(Debug, Clone)]
pub struct Sum<A, B>(pub A, pub B);

impl<A: Cocycle, B: Cocycle> Cocycle for Sum<A, B> {
    fn birkhoff(&self, x: u64, n: u64) -> f64 {
        self.0.birkhoff(x, n) + self.1.birkhoff(x, n)
    }
}

/// Cocycle given by a closure for its Birkhoff sums.
pub struct FnCocycle<F>(pub F);

impl<F: Fn(u64, u64) -> f64> Cocycle for FnCocycle<F> {
    fn birkhoff(&self, x: u64, n: u64) -> f64 {
        (self.0)(x, n)
    }
}

/// Open ball `N(center, radius)` in the reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: f64,
    pub radius: f64,
}

impl Window {
    pub fn new(center: f64, radius: f64) -> Result<Self> {
        if !center.is_finite() || !radius.is_finite() {
            return Err(Error::NonFinite("window"));
        }
        if radius <= WINDOW_SHRINK {
            return Err(Error::InvalidParameter(format!(
                "window radius {radius} must exceed the membership margin {WINDOW_SHRINK}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, value: f64) -> bool {
        (value - self.center).abs() < self.radius - WINDOW_SHRINK
    }

    /// Minkowski sum of two balls.
    pub fn plus(&self, other: &Window) -> Window {
        Window {
            center: self.center + other.center,
            radius: self.radius + other.radius,
        }
    }

    /// `n V = {v_1 + ... + v_n}` for a ball `V`.
    pub fn times(&self, n: u64) -> Window {
        Window {
            center: self.center * n as f64,
            radius: self.radius * n as f64,
        }
    }
}

/// Partition of part of a cyclic system into cells; points outside every
/// cell are uncovered.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    order: u64,
    labels: Vec<u32>,
    cells: Vec<Vec<u64>>,
}

const UNCOVERED: u32 = u32::MAX;

impl Partition {
    /// Cells are numbered by first appearance while scanning `0..order`.
    pub fn from_fn(order: u64, label: impl Fn(u64) -> Option<u64>) -> Result<Self> {
        let mut ids: BTreeMap<u64, u32> = BTreeMap::new();
        let mut labels = Vec::with_capacity(order as usize);
        let mut cells: Vec<Vec<u64>> = Vec::new();
        for x in 0..order {
            match label(x) {
                Some(key) => {
                    let next = cells.len() as u32;
                    let id = *ids.entry(key).or_insert(next);
                    if id == next {
                        cells.push(Vec::new());
                    }
                    cells[id as usize].push(x);
                    labels.push(id);
                }
                None => labels.push(UNCOVERED),
            }
        }
        if cells.is_empty() {
            return Err(Error::EmptyPartition);
        }
        Ok(Self { order, labels, cells })
    }

    pub fn whole(order: u64) -> Result<Self> {
        Self::from_fn(order, |_| Some(0))
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn cells(&self) -> &[Vec<u64>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, x: u64) -> Option<usize> {
        match self.labels[x as usize] {
            UNCOVERED => None,
            id => Some(id as usize),
        }
    }

    pub fn cell_mass(&self, cell: usize) -> Measure {
        measure::ratio(self.cells[cell].len() as u64, self.order)
    }

    pub fn covered_mass(&self) -> Measure {
        let covered: usize = self.cells.iter().map(Vec::len).sum();
        measure::ratio(covered as u64, self.order)
    }
}

/// Element of `[T]_+` given by a domain and positive return times.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartialTransformation {
    pub domain: Vec<u64>,
    pub times: Vec<u64>,
}

impl PartialTransformation {
    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn images(&self, sys: &CyclicSystem) -> Vec<u64> {
        self.domain.iter().zip(&self.times).map(|(&x, &n)| sys.step(x, n)).collect()
    }

    /// Histogram of return times.
    pub fn time_histogram(&self) -> BTreeMap<u64, u64> {
        let mut hist = BTreeMap::new();
        for &n in &self.times {
            *hist.entry(n).or_insert(0) += 1;
        }
        hist
    }

    /// Checks positivity of return times, that the domain has no repeats and
    /// that the map is injective (so domain and image have equal mass).
    pub fn verify(&self, sys: &CyclicSystem) -> Result<()> {
        if self.domain.len() != self.times.len() {
            return Err(Error::Construction("domain and return times differ in length".into()));
        }
        if self.times.contains(&0) {
            return Err(Error::Construction("return time 0 in [T]_+".into()));
        }
        let mut domain = self.domain.clone();
        domain.sort_unstable();
        domain.dedup();
        if domain.len() != self.domain.len() {
            return Err(Error::Construction("repeated domain point".into()));
        }
        let mut images = self.images(sys);
        images.sort_unstable();
        images.dedup();
        if images.len() != self.domain.len() {
            return Err(Error::Construction("partial transformation is not injective".into()));
        }
        Ok(())
    }

    /// Keeps the domain points satisfying `keep`.
    pub fn restrict(&self, keep: impl Fn(u64) -> bool) -> Self {
        let (domain, times) = self
            .domain
            .iter()
            .zip(&self.times)
            .filter(|(&x, _)| keep(x))
            .map(|(&x, &n)| (x, n))
            .unzip();
        Self { domain, times }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub cell: usize,
    pub size: u64,
    #[serde(with = "measure::fraction")]
    pub mass: Measure,
    #[serde(with = "measure::fraction")]
    pub domain_mass: Measure,
    /// `m(a \ dom R)`.
    #[serde(with = "measure::fraction")]
    pub deficiency: Measure,
    /// `eps m(a)`; the cell passes when the deficiency is strictly below it.
    #[serde(with = "measure::fraction")]
    pub allowed: Measure,
    pub return_times: BTreeMap<u64, u64>,
    pub pass: bool,
    #[serde(skip)]
    pub witness: PartialTransformation,
}

/// Finite essential value certificate `EVC^T(U, eps, alpha, N)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvcCertificate {
    pub window: Window,
    pub eps: f64,
    pub bound: u64,
    pub cells: Vec<CellRecord>,
    #[serde(with = "measure::fraction")]
    pub uncovered_mass: Measure,
    /// Mass of failed cells plus uncovered mass.
    #[serde(with = "measure::fraction")]
    pub failure_mass: Measure,
    /// Exact slack the failure mass is compared with.
    #[serde(with = "measure::fraction")]
    pub allowed_failure: Measure,
    pub pass: bool,
}

impl EvcCertificate {
    pub fn passing_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.pass).count()
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite(name));
    }
    if value <= 0.0 {
        return Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")));
    }
    Ok(())
}

fn check_partition(sys: &CyclicSystem, partition: &Partition) -> Result<()> {
    if partition.order() != sys.order() {
        return Err(Error::InvalidSystem(format!(
            "partition of order {} on a system of order {}",
            partition.order(),
            sys.order()
        )));
    }
    Ok(())
}

/// Greedy witness for one cell: times are tried in increasing order and,
/// for each time, points in increasing order; a point whose image is
/// already claimed waits for a later time.
fn greedy_witness<C: Cocycle + ?Sized>(
    sys: &CyclicSystem,
    phi: &C,
    window: &Window,
    partition: &Partition,
    cell: usize,
    bound: u64,
) -> PartialTransformation {
    let points = &partition.cells()[cell];
    let mut time: Vec<u64> = vec![0; points.len()];
    let mut claimed = vec![false; points.len()];
    let mut open = points.len();
    for n in 1..=bound {
        if open == 0 {
            break;
        }
        for (i, &x) in points.iter().enumerate() {
            if time[i] != 0 {
                continue;
            }
            let y = sys.step(x, n);
            if partition.cell_of(y) != Some(cell) {
                continue;
            }
            let pos = points.binary_search(&y).expect("cell is sorted");
            if claimed[pos] || !window.contains(phi.birkhoff(x, n)) {
                continue;
            }
            claimed[pos] = true;
            time[i] = n;
            open -= 1;
        }
    }
    let (domain, times) = points
        .iter()
        .zip(&time)
        .filter(|(_, &n)| n > 0)
        .map(|(&x, &n)| (x, n))
        .unzip();
    PartialTransformation { domain, times }
}

/// Independent recheck of a witness against its cell, window and bound.
fn verify_witness<C: Cocycle + ?Sized>(
    sys: &CyclicSystem,
    phi: &C,
    window: &Window,
    partition: &Partition,
    cell: usize,
    bound: u64,
    witness: &PartialTransformation,
) -> Result<()> {
    witness.verify(sys)?;
    for (&x, &n) in witness.domain.iter().zip(&witness.times) {
        if n > bound {
            return Err(Error::Construction(format!("return time {n} exceeds N = {bound}")));
        }
        if partition.cell_of(x) != Some(cell) || partition.cell_of(sys.step(x, n)) != Some(cell) {
            return Err(Error::Construction(format!("witness leaves cell {cell} at {x}")));
        }
        if !window.contains(phi.birkhoff(x, n)) {
            return Err(Error::Construction(format!("cocycle outside window at {x}, n = {n}")));
        }
    }
    Ok(())
}

fn cell_record(
    sys: &CyclicSystem,
    partition: &Partition,
    cell: usize,
    witness: PartialTransformation,
    eps: &Measure,
) -> CellRecord {
    let size = partition.cells()[cell].len() as u64;
    let mass = partition.cell_mass(cell);
    let domain_mass = sys.mass(witness.len() as u64);
    let deficiency = &mass - &domain_mass;
    let allowed = eps * &mass;
    CellRecord {
        cell,
        size,
        pass: deficiency < allowed,
        mass,
        domain_mass,
        deficiency,
        allowed,
        return_times: witness.time_histogram(),
        witness,
    }
}

fn assemble_certificate(
    partition: &Partition,
    window: Window,
    eps: f64,
    allowed_failure: Measure,
    bound: u64,
    cells: Vec<CellRecord>,
) -> EvcCertificate {
    let uncovered_mass = measure::one() - partition.covered_mass();
    let failed = cells
        .iter()
        .filter(|c| !c.pass)
        .fold(measure::zero(), |acc, c| acc + &c.mass);
    let failure_mass = failed + &uncovered_mass;
    EvcCertificate {
        window,
        eps,
        bound,
        cells,
        pass: failure_mass <= allowed_failure,
        uncovered_mass,
        failure_mass,
        allowed_failure,
    }
}

/// Builds and certifies `EVC^T(U, eps, alpha, N)` cell by cell.
pub fn check_evc_finite<C: Cocycle + ?Sized>(
    sys: &CyclicSystem,
    phi: &C,
    window: Window,
    eps: f64,
    partition: &Partition,
    bound: u64,
) -> Result<EvcCertificate> {
    if bound == 0 {
        return Err(Error::ZeroBound);
    }
    check_positive("eps", eps)?;
    check_partition(sys, partition)?;
    let eps_exact = measure::from_f64(eps);
    let mut cells = Vec::with_capacity(partition.len());
    for cell in 0..partition.len() {
        let witness = greedy_witness(sys, phi, &window, partition, cell, bound);
        verify_witness(sys, phi, &window, partition, cell, bound, &witness)?;
        cells.push(cell_record(sys, partition, cell, witness, &eps_exact));
    }
    Ok(assemble_certificate(partition, window, eps, eps_exact, bound, cells))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidCell {
    pub cell: usize,
    #[serde(with = "measure::fraction")]
    pub mass: Measure,
    /// Chosen time, or the first candidate tried when none passes.
    pub n: Option<u64>,
    /// `m(a Δ T^-n a)`.
    #[serde(with = "measure::fraction")]
    pub sym_diff: Measure,
    /// `m(a ∩ [phi_n in U])`.
    #[serde(with = "measure::fraction")]
    pub hit_mass: Measure,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidReport {
    pub window: Window,
    #[serde(with = "measure::fraction")]
    pub delta: Measure,
    #[serde(with = "measure::fraction")]
    pub ratio: Measure,
    pub cells: Vec<RigidCell>,
    #[serde(with = "measure::fraction")]
    pub covered_mass: Measure,
    #[serde(with = "measure::fraction")]
    pub failed_mass: Measure,
    /// Smallest `hit_mass / mass` over passing cells.
    #[serde(with = "measure::fraction")]
    pub min_hit_ratio: Measure,
    /// Largest `sym_diff / mass` over passing cells.
    #[serde(with = "measure::fraction")]
    pub max_sym_ratio: Measure,
    pub pass: bool,
}

/// Rigid condition: for `delta`-almost every cell some candidate `n` has
/// `m(a Δ T^-n a) < delta m(a)` and `m(a ∩ [phi_n in U]) > ratio m(a)`.
pub fn check_rigid_evc<C: Cocycle + ?Sized>(
    sys: &CyclicSystem,
    phi: &C,
    window: Window,
    partition: &Partition,
    candidates: impl Fn(usize) -> Vec<u64>,
    delta: &Measure,
    ratio: &Measure,
) -> Result<RigidReport> {
    check_partition(sys, partition)?;
    let mut cells = Vec::with_capacity(partition.len());
    let mut failed_mass = measure::zero();
    let mut min_hit_ratio: Option<Measure> = None;
    let mut max_sym_ratio = measure::zero();
    for cell in 0..partition.len() {
        let points = &partition.cells()[cell];
        let mass = partition.cell_mass(cell);
        let mut record: Option<RigidCell> = None;
        for n in candidates(cell) {
            let leaving = points.iter().filter(|&&x| partition.cell_of(sys.step(x, n)) != Some(cell)).count();
            let hits = points.iter().filter(|&&x| window.contains(phi.birkhoff(x, n))).count();
            let sym_diff = sys.mass(2 * leaving as u64);
            let hit_mass = sys.mass(hits as u64);
            let pass = sym_diff < delta * &mass && hit_mass > ratio * &mass;
            let candidate = RigidCell {
                cell,
                mass: mass.clone(),
                n: Some(n),
                sym_diff,
                hit_mass,
                pass,
            };
            if pass || record.is_none() {
                record = Some(candidate);
            }
            if pass {
                break;
            }
        }
        let record = record.unwrap_or(RigidCell {
            cell,
            mass: mass.clone(),
            n: None,
            sym_diff: measure::zero(),
            hit_mass: measure::zero(),
            pass: false,
        });
        if record.pass {
            let hit = &record.hit_mass / &mass;
            let sym = &record.sym_diff / &mass;
            if min_hit_ratio.as_ref().map_or(true, |m| hit < *m) {
                min_hit_ratio = Some(hit);
            }
            if sym > max_sym_ratio {
                max_sym_ratio = sym;
            }
        } else {
            failed_mass += &mass;
        }
        cells.push(record);
    }
    Ok(RigidReport {
        window,
        delta: delta.clone(),
        ratio: ratio.clone(),
        pass: failed_mass <= *delta,
        cells,
        covered_mass: partition.covered_mass(),
        failed_mass,
        min_hit_ratio: min_hit_ratio.unwrap_or_else(measure::zero),
        max_sym_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanHit {
    pub cell: usize,
    pub n: u64,
    /// `m(A ∩ T^-n A ∩ [phi_n in U])`.
    #[serde(with = "measure::fraction")]
    pub mass: Measure,
}

/// For each cell, the smallest `n <= n_max` with `m(A ∩ T^-n A ∩ [phi_n in U]) > 0`.
pub fn essential_value_scan<C: Cocycle + ?Sized>(
    sys: &CyclicSystem,
    phi: &C,
    partition: &Partition,
    window: Window,
    n_max: u64,
) -> Result<Vec<Option<ScanHit>>> {
    check_partition(sys, partition)?;
    Ok((0..partition.len())
        .map(|cell| {
            let points = &partition.cells()[cell];
            (1..=n_max).find_map(|n| {
                let hits = points
                    .iter()
                    .filter(|&&x| partition.cell_of(sys.step(x, n)) == Some(cell) && window.contains(phi.birkhoff(x, n)))
                    .count();
                (hits > 0).then(|| ScanHit {
                    cell,
                    n,
                    mass: sys.mass(hits as u64),
                })
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfReport {
    pub c: f64,
    pub eps: f64,
    pub block: u64,
    pub blocks_ahead: u64,
    #[serde(with = "measure::fraction")]
    pub set_mass: Measure,
    #[serde(with = "measure::fraction")]
    pub domain_mass: Measure,
    /// `m(A \ dom R)`.
    #[serde(with = "measure::fraction")]
    pub deficiency: Measure,
    pub min_time: u64,
    pub max_time: u64,
    /// `cpq(1 - eps)` and `cpq(1 + eps)`.
    pub lower: f64,
    pub upper: f64,
    /// Mass of the points whose `p`-block visit frequency is within `eps m(A)` of `m(A)`.
    #[serde(with = "measure::fraction")]
    pub regular_mass: Measure,
    /// Mass of regular points whose image under the block shift is regular too.
    #[serde(with = "measure::fraction")]
    pub regular_pair_mass: Measure,
    #[serde(skip)]
    pub transformation: PartialTransformation,
}

/// Return machine inside `A` with return times `cpq(1 ± eps)`.
///
/// The system is cut into blocks of length `p`; the `i`-th visit to `A`
/// in a block is sent to the `i`-th visit in the block `[cq]` blocks ahead.
pub fn hopf_return_machine(sys: &CyclicSystem, set: &[bool], c: f64, eps: f64, p: u64, q: u64) -> Result<HopfReport> {
    check_positive("c", c)?;
    check_positive("eps", eps)?;
    if set.len() as u64 != sys.order() {
        return Err(Error::InvalidSystem("set indicator length differs from the order".into()));
    }
    if p == 0 || q == 0 {
        return Err(Error::InvalidParameter("p and q must be positive".into()));
    }
    let order = sys.order();
    let set_size = set.iter().filter(|&&b| b).count() as u64;
    if set_size == 0 {
        return Err(Error::InvalidParameter("A must have positive measure".into()));
    }
    let blocks_ahead = (c * q as f64).floor() as u64;
    let blocks = order / p;
    if blocks_ahead == 0 || blocks_ahead >= blocks {
        return Err(Error::HopfShortfall(format!(
            "[cq] = {blocks_ahead} blocks does not fit in {blocks} blocks of length {p}"
        )));
    }
    let wraps = order % p == 0;
    let visits: Vec<Vec<u64>> = (0..blocks)
        .map(|b| (0..p).filter(|&o| set[(b * p + o) as usize]).collect())
        .collect();
    let mut transformation = PartialTransformation::default();
    for (b, offsets) in visits.iter().enumerate() {
        let target = b as u64 + blocks_ahead;
        let target = match (target < blocks, wraps) {
            (true, _) => target,
            (false, true) => target - blocks,
            (false, false) => continue,
        };
        let ahead = &visits[target as usize];
        for (rank, &o) in offsets.iter().enumerate() {
            if let Some(&o2) = ahead.get(rank) {
                transformation.domain.push(b as u64 * p + o);
                transformation.times.push(blocks_ahead * p + o2 - o);
            }
        }
    }
    transformation.verify(sys)?;
    if transformation.images(sys).iter().any(|&y| !set[y as usize]) {
        return Err(Error::Construction("return machine leaves A".into()));
    }

    let cpq = c * p as f64 * q as f64;
    let (lower, upper) = (cpq * (1.0 - eps), cpq * (1.0 + eps));
    let min_time = transformation.times.iter().copied().min().unwrap_or(0);
    let max_time = transformation.times.iter().copied().max().unwrap_or(0);
    let set_mass = sys.mass(set_size);
    let domain_mass = sys.mass(transformation.len() as u64);
    let deficiency = &set_mass - &domain_mass;

    let density = set_size as f64 / order as f64;
    let mut window_count = (0..p).filter(|&k| set[sys.step(0, k) as usize]).count() as i64;
    let mut regular = vec![false; order as usize];
    for x in 0..order {
        let freq = window_count as f64 / p as f64;
        regular[x as usize] = (freq - density).abs() < eps * density;
        window_count += i64::from(set[sys.step(x, p) as usize]) - i64::from(set[x as usize]);
    }
    let shift = blocks_ahead * p;
    let regular_size = regular.iter().filter(|&&r| r).count() as u64;
    let pair_size = (0..order)
        .filter(|&x| regular[x as usize] && regular[sys.step(x, shift) as usize])
        .count() as u64;

    let report = HopfReport {
        c,
        eps,
        block: p,
        blocks_ahead,
        set_mass,
        domain_mass,
        deficiency,
        min_time,
        max_time,
        lower,
        upper,
        regular_mass: sys.mass(regular_size),
        regular_pair_mass: sys.mass(pair_size),
        transformation,
    };
    if report.transformation.is_empty() || (min_time as f64) < lower || (max_time as f64) > upper {
        return Err(Error::HopfShortfall(format!(
            "return times [{min_time}, {max_time}] outside [{lower}, {upper}]"
        )));
    }
    if report.deficiency >= measure::from_f64(eps) {
        return Err(Error::HopfShortfall(format!(
            "m(A \\ dom R) = {} is not below eps = {eps}",
            measure::fraction_string(&report.deficiency)
        )));
    }
    Ok(report)
}

/// Points whose next `bound` values of `psi` all lie in `v`.
fn stable_points(psi: &Tabulated, v: &Window, bound: u64) -> Vec<bool> {
    let values = psi.values();
    let order = values.len();
    let bad: Vec<bool> = values.iter().map(|&x| !v.contains(x)).collect();
    if !bad.contains(&true) {
        return vec![true; order];
    }
    // Distance to the next bad point, scanning the cycle backwards twice.
    let mut next_bad = vec![u64::MAX; order];
    let mut dist = u64::MAX;
    for i in (0..2 * order).rev() {
        let x = i % order;
        dist = if bad[x] { 0 } else { dist.saturating_add(1) };
        if i < order {
            next_bad[x] = dist;
        }
    }
    next_bad.into_iter().map(|d| d >= bound).collect()
}

/// Restricts the witnesses of a certificate for `phi` to the points where
/// `psi` stays in the ball `V = N(0, v)` for `N` steps and recertifies
/// `phi + psi` with window `U + N V` and slack `eps + delta`.
pub fn perturbation_check<C: Cocycle + ?Sized>(
    sys: &CyclicSystem,
    certificate: &EvcCertificate,
    phi: &C,
    partition: &Partition,
    psi: &Tabulated,
    v: f64,
    delta: f64,
) -> Result<EvcCertificate> {
    check_positive("delta", delta)?;
    check_partition(sys, partition)?;
    if psi.values().len() as u64 != sys.order() {
        return Err(Error::InvalidSystem("perturbation table length differs from the order".into()));
    }
    if certificate.cells.len() != partition.len() {
        return Err(Error::InvalidSystem("certificate does not match the partition".into()));
    }
    let ball = Window::new(0.0, v)?;
    let bound = certificate.bound;
    let outside = psi.values().iter().filter(|&&x| !ball.contains(x)).count() as u64;
    let measured = sys.mass(outside);
    let delta_exact = measure::from_f64(delta);
    let hypothesis = &delta_exact * &delta_exact / measure::ratio(bound, 1);
    if measured >= hypothesis {
        return Err(Error::PerturbationHypothesis {
            measured: measure::fraction_string(&measured),
            bound: measure::fraction_string(&hypothesis),
        });
    }
    let stable = stable_points(psi, &ball, bound);
    let window = certificate.window.plus(&ball.times(bound));
    let combined = Sum(phi, psi);
    let eps = measure::from_f64(certificate.eps) + &delta_exact;
    let keep_ratio = measure::one() - &delta_exact;
    let mut cells = Vec::with_capacity(partition.len());
    for old in &certificate.cells {
        let cell = old.cell;
        let in_b = partition.cells()[cell].iter().filter(|&&x| stable[x as usize]).count() as u64;
        let dense = sys.mass(in_b) > &keep_ratio * &old.mass;
        let witness = if old.pass && dense {
            let restricted = old.witness.restrict(|x| stable[x as usize]);
            verify_witness(sys, &combined, &window, partition, cell, bound, &restricted)?;
            restricted
        } else {
            PartialTransformation::default()
        };
        let mut record = cell_record(sys, partition, cell, witness, &eps);
        record.pass &= old.pass && dense;
        cells.push(record);
    }
    Ok(assemble_certificate(
        partition,
        window,
        certificate.eps + delta,
        eps,
        bound,
        cells,
    ))
}

/// One level of an accumulation of coboundaries `f_k o T - f_k`.
#[derive(Debug, Clone)]
pub struct AccumulationLevel {
    pub transfer: Vec<f64>,
    pub partition: Partition,
    pub bound: u64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccumulationStep {
    pub level: usize,
    /// Certificate of the partial sum up to this level.
    pub partial: EvcCertificate,
    /// `m([|f_k o T - f_k| >= eps_{k-1}/N_{k-1}])` and its bound `eps_{k-1}^2/N_{k-1}`.
    #[serde(with = "opt_fraction")]
    pub tail_mass: Option<Measure>,
    #[serde(with = "opt_fraction")]
    pub tail_bound: Option<Measure>,
    /// Certificate of the full sum obtained by perturbing the partial one.
    pub full: EvcCertificate,
    /// Radius `sum_{j >= k} eps_j` and slack bound `2 sqrt(sum_{j >= k} eps_j^2)`.
    pub window_radius: f64,
    pub slack_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccumulationReport {
    pub target: f64,
    pub steps: Vec<AccumulationStep>,
    pub pass: bool,
}

mod opt_fraction {
    use crate::measure::{fraction_string, Measure};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(value: &Option<Measure>, serializer: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => serializer.serialize_some(&fraction_string(v)),
            None => serializer.serialize_none(),
        }
    }
}

fn differences(sys: &CyclicSystem, f: &[f64]) -> Vec<f64> {
    (0..sys.order()).map(|x| f[sys.step(x, 1) as usize] - f[x as usize]).collect()
}

/// Checks both hypotheses of the accumulation theorem level by level and
/// chains the perturbation lemma to certify the full sum at every level.
pub fn accumulate_coboundaries(sys: &CyclicSystem, levels: &[AccumulationLevel], target: f64) -> Result<AccumulationReport> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no levels".into()));
    }
    let order = sys.order() as usize;
    for (i, level) in levels.iter().enumerate() {
        if level.transfer.len() != order {
            return Err(Error::LevelHypothesis {
                level: i + 1,
                reason: "transfer function length differs from the order".into(),
            });
        }
    }
    let diffs: Vec<Vec<f64>> = levels.iter().map(|l| differences(sys, &l.transfer)).collect();
    let mut partial_transfer = vec![0.0; order];
    let mut partials = Vec::with_capacity(levels.len());
    let mut tails = Vec::with_capacity(levels.len());
    for (i, level) in levels.iter().enumerate() {
        let k = i + 1;
        for (acc, f) in partial_transfer.iter_mut().zip(&level.transfer) {
            *acc += f;
        }
        let phi = Coboundary::new(partial_transfer.clone())?;
        let window = Window::new(target, level.eps)?;
        let cert = check_evc_finite(sys, &phi, window, level.eps, &level.partition, level.bound)
            .map_err(|e| Error::LevelHypothesis { level: k, reason: e.to_string() })?;
        if !cert.pass {
            return Err(Error::LevelHypothesis {
                level: k,
                reason: format!(
                    "partial sum fails EVC: failure mass {} exceeds {}",
                    measure::fraction_string(&cert.failure_mass),
                    measure::fraction_string(&cert.allowed_failure)
                ),
            });
        }
        let tail = if k >= 2 {
            let prev = &levels[i - 1];
            let threshold = prev.eps / prev.bound as f64;
            let count = diffs[i].iter().filter(|d| d.abs() >= threshold).count() as u64;
            let mass = sys.mass(count);
            let eps_prev = measure::from_f64(prev.eps);
            let bound = &eps_prev * &eps_prev / measure::ratio(prev.bound, 1);
            if mass > bound {
                return Err(Error::LevelHypothesis {
                    level: k,
                    reason: format!(
                        "m([|f_k o T - f_k| >= {threshold}]) = {} exceeds {}",
                        measure::fraction_string(&mass),
                        measure::fraction_string(&bound)
                    ),
                });
            }
            Some((mass, bound))
        } else {
            None
        };
        partials.push((phi, cert));
        tails.push(tail);
    }

    let mut steps = Vec::with_capacity(levels.len());
    for (i, ((phi, cert), tail)) in partials.into_iter().zip(tails).enumerate() {
        let k = i + 1;
        let later_eps: f64 = levels[i + 1..].iter().map(|l| l.eps).sum();
        let sq: f64 = levels[i..].iter().map(|l| l.eps * l.eps).sum();
        let window_radius = levels[i].eps + later_eps;
        let slack_bound = 2.0 * sq.sqrt();
        let full = if i + 1 == levels.len() {
            cert.clone()
        } else {
            let tail_values: Vec<f64> = (0..order).map(|x| diffs[i + 1..].iter().map(|d| d[x]).sum()).collect();
            let psi = Tabulated::new(tail_values)?;
            let v = later_eps / levels[i].bound as f64;
            perturbation_check(sys, &cert, &phi, &levels[i].partition, &psi, v, sq.sqrt())
                .map_err(|e| Error::LevelHypothesis { level: k, reason: e.to_string() })?
        };
        let (tail_mass, tail_bound) = tail.map_or((None, None), |(m, b)| (Some(m), Some(b)));
        steps.push(AccumulationStep {
            level: k,
            partial: cert,
            tail_mass,
            tail_bound,
            full,
            window_radius,
            slack_bound,
        });
    }
    let pass = steps
        .iter()
        .all(|s| s.full.pass && s.full.eps <= s.slack_bound + 1e-12 && s.full.window.radius <= s.window_radius + 1e-12);
    Ok(AccumulationReport { target, steps, pass })
}

/// Level-`k` partition of a built odometer: cells fix `x_1..x_{k-1}` and put
/// `x_k` in one of the windows `j 4^m <= x_k < (j+1) 4^m`, `j <= m - 2`.
pub fn odometer_level_partition(build: &Section6, k: usize) -> Result<Partition> {
    let sys = CyclicSystem::from_odometer(&build.spec)?;
    let meta = build.level(k);
    let below = crate::odometer::q_u64(&build.spec, k)?;
    Partition::from_fn(sys.order(), |x| {
        let digit = (x / below) % meta.digit;
        let window = digit / meta.window;
        (window + 1 < meta.m).then_some(x % below + below * window)
    })
}

/// Rigid certificate at level `k` with target `g_k`: cell `(u, j)` uses
/// `n = n(j, k) q_k` and must satisfy `m(a Δ T^-n a) < m(a) / m_k`.
pub fn odometer_rigid_certificate(build: &Section6, k: usize, radius: f64, ratio: &Measure) -> Result<RigidReport> {
    let sys = CyclicSystem::from_odometer(&build.spec)?;
    let meta = build.level(k);
    let partition = odometer_level_partition(build, k)?;
    let below = crate::odometer::q_u64(&build.spec, k)?;
    let phi = OdometerCocycle {
        spec: &build.spec,
        cocycle: &build.cocycle,
    };
    let candidates = |cell: usize| {
        let x = partition.cells()[cell][0];
        let window = ((x / below) % meta.digit) / meta.window;
        vec![meta.witness_shifts[window as usize] * below]
    };
    check_rigid_evc(
        &sys,
        &phi,
        Window::new(meta.g, radius)?,
        &partition,
        candidates,
        &measure::ratio(1, meta.m),
        ratio,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(order: usize) -> Tabulated {
        Tabulated::new(vec![1.0; order]).unwrap()
    }

    #[test]
    fn tabulated_sums_match_direct_sums() {
        let values: Vec<f64> = (0..7).map(|i| (i as f64 * 0.37).sin()).collect();
        let phi = Tabulated::new(values.clone()).unwrap();
        for x in 0..7u64 {
            for n in [0u64, 1, 5, 300, 1000, 7 * 300 + 3] {
                let direct: f64 = (0..n).map(|i| values[((x + i) % 7) as usize]).sum();
                assert!((phi.birkhoff(x, n) - direct).abs() < 1e-10, "x = {x}, n = {n}");
            }
        }
        let h = Coboundary::new(vec![0.0, 2.0, 5.0]).unwrap();
        assert_eq!(h.birkhoff(1, 4), 3.0);
        assert_eq!(h.birkhoff(2, 1), -5.0);
    }

    #[test]
    fn windows_reject_radii_below_the_margin() {
        assert!(Window::new(0.0, WINDOW_SHRINK).is_err());
        assert!(Window::new(f64::NAN, 1.0).is_err());
        let w = Window::new(1.0, 0.5).unwrap();
        assert!(w.contains(1.4) && !w.contains(1.5));
        let v = w.plus(&Window::new(0.0, 0.1).unwrap().times(3));
        assert!((v.radius - 0.8).abs() < 1e-15);
    }

    #[test]
    fn constant_cocycle_is_certified_at_its_multiples() {
        let sys = CyclicSystem::new(12).unwrap();
        let phi = ones(12);
        let residues = Partition::from_fn(12, |x| Some(x % 3)).unwrap();
        let cert = check_evc_finite(&sys, &phi, Window::new(3.0, 0.5).unwrap(), 0.1, &residues, 5).unwrap();
        assert!(cert.pass);
        assert!(cert.cells.iter().all(|c| c.return_times.keys().eq([3u64].iter())));
        assert_eq!(cert.failure_mass, measure::zero());

        let unreachable = check_evc_finite(&sys, &phi, Window::new(20.0, 0.5).unwrap(), 0.1, &residues, 10).unwrap();
        assert!(!unreachable.pass);
        assert_eq!(unreachable.failure_mass, measure::one());
        assert!(check_evc_finite(&sys, &phi, Window::new(3.0, 0.5).unwrap(), 0.1, &residues, 0).is_err());
    }

    #[test]
    fn rigid_condition_and_scan() {
        let sys = CyclicSystem::new(12).unwrap();
        let phi = ones(12);
        let residues = Partition::from_fn(12, |x| Some(x % 3)).unwrap();
        let window = Window::new(3.0, 0.5).unwrap();
        let rep = check_rigid_evc(&sys, &phi, window, &residues, |_| vec![1, 3], &measure::ratio(1, 2), &default_rigid_ratio()).unwrap();
        assert!(rep.pass);
        assert!(rep.cells.iter().all(|c| c.n == Some(3) && c.sym_diff == measure::zero()));
        assert_eq!(rep.min_hit_ratio, measure::one());

        let hits = essential_value_scan(&sys, &phi, &Partition::whole(12).unwrap(), Window::new(2.0, 0.5).unwrap(), 10).unwrap();
        assert_eq!(hits[0].as_ref().map(|h| h.n), Some(2));
    }

    #[test]
    fn return_machine_on_the_whole_space_is_a_rotation() {
        let sys = CyclicSystem::new(1000).unwrap();
        let rep = hopf_return_machine(&sys, &vec![true; 1000], 1.0, 0.1, 10, 5).unwrap();
        assert_eq!((rep.min_time, rep.max_time), (50, 50));
        assert_eq!(rep.deficiency, measure::zero());
        assert!(hopf_return_machine(&sys, &vec![false; 1000], 1.0, 0.1, 10, 5).is_err());
    }

    #[test]
    fn perturbation_hypothesis_is_enforced() {
        let sys = CyclicSystem::new(12).unwrap();
        let phi = ones(12);
        let whole = Partition::whole(12).unwrap();
        let cert = check_evc_finite(&sys, &phi, Window::new(1.0, 0.5).unwrap(), 0.1, &whole, 1).unwrap();
        let spikes = Tabulated::new((0..12).map(|x| if x == 0 { 5.0 } else { 0.0 }).collect()).unwrap();
        // One point in twelve is outside V; delta^2 / N = 1/100 is smaller.
        let err = perturbation_check(&sys, &cert, &phi, &whole, &spikes, 0.1, 0.1).unwrap_err();
        assert!(matches!(err, Error::PerturbationHypothesis { .. }));
        // With delta = 1/2 the hypothesis holds and the spike's neighbour is dropped.
        let ok = perturbation_check(&sys, &cert, &phi, &whole, &spikes, 0.1, 0.5).unwrap();
        assert!(ok.pass);
        assert_eq!(ok.cells[0].domain_mass, measure::ratio(11, 12));
    }
}
