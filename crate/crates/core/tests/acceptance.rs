//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. The
//! process fails when a criterion fails, except for sub-checks listed as
//! known to be out of reach at desk scale; those must fail exactly as
//! recorded, so a change in their outcome is flagged too.

use std::time::{Duration, Instant};

use cocycles::blocks::{balanced_block, find_witness_shift, shift_match_count, tail_mass_check, GammaVector, DEFAULT_MATCH_TOL};
use cocycles::evc::{
    accumulate_coboundaries, check_evc_finite, default_rigid_ratio, hopf_return_machine, odometer_rigid_certificate,
    perturbation_check, AccumulationLevel, Coboundary, CyclicSystem, Partition, Tabulated, Window,
};
use cocycles::maharam::{build_maharam, dilation_flow_check, NonsingularSystem};
use cocycles::measure;
use cocycles::odometer::{
    build_section6, coboundary_defect, defect_bound, exceptional_mass, non_exceptional_at, squash_translation,
    OdometerSpec, ProductCocycle, Section6, Section6Params,
};
use cocycles::rotation::level::{desk_threshold, eval_at, LevelSampling, Point};
use cocycles::rotation::params::section7_params;
use cocycles::rotation::{build_level, check_level, rigid_time_report, squash_rotation_search, ContinuedFraction, Profile, RotationLevel};
use cocycles::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    what: String,
    pass: bool,
    /// Out of reach at desk scale; expected to fail.
    known_unattainable: bool,
}

struct Criterion {
    id: u8,
    title: &'static str,
    limit: Duration,
    elapsed: Duration,
    checks: Vec<Check>,
}

impl Criterion {
    fn new(id: u8, title: &'static str, limit_secs: u64) -> Self {
        Self {
            id,
            title,
            limit: Duration::from_secs(limit_secs),
            elapsed: Duration::ZERO,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, what: impl Into<String>, pass: bool) {
        self.checks.push(Check { what: what.into(), pass, known_unattainable: false });
    }

    fn known_unattainable(&mut self, what: impl Into<String>, pass: bool) {
        self.checks.push(Check { what: what.into(), pass, known_unattainable: true });
    }

    fn pass(&self) -> bool {
        self.elapsed <= self.limit && self.checks.iter().all(|c| c.pass)
    }

    /// Everything that is not known to be out of reach passes, and every
    /// known gap still fails.
    fn as_expected(&self) -> bool {
        self.elapsed <= self.limit && self.checks.iter().all(|c| c.pass != c.known_unattainable)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn blocks() -> Criterion {
    let mut c = Criterion::new(1, "balanced block witness counts and tail bound", 10);
    let mut r = rng(1);
    for m in 1..=8usize {
        let (mut worst_margin, mut tails_ok, mut counts_ok) = (i64::MAX, true, true);
        for _ in 0..200 {
            let gamma: Vec<f64> = (0..m)
                .map(|_| r.gen_range(0.05..2.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let block = balanced_block(&GammaVector::new(gamma.clone()).unwrap());
            let need = block.len() / 2;
            for &g in &gamma {
                let count = find_witness_shift(&block, g, DEFAULT_MATCH_TOL)
                    .map(|n| shift_match_count(&block, n, g, DEFAULT_MATCH_TOL).unwrap())
                    .unwrap_or(0);
                counts_ok &= count >= need;
                worst_margin = worst_margin.min(count as i64 - need as i64);
            }
            tails_ok &= tail_mass_check(&block, None).unwrap().pass;
        }
        c.check(format!("m = {m}: witness counts >= 4^m/2 (worst margin {worst_margin})"), counts_ok);
        c.check(format!("m = {m}: tail bound"), tails_ok);
    }
    c
}

fn telescoping() -> Criterion {
    let mut c = Criterion::new(2, "closed-form Birkhoff sums of product cocycles", 5);
    let mut r = rng(2);
    for digits in [vec![2, 3, 5, 7, 11], vec![16, 4, 9, 8], vec![10, 10, 10, 10, 10]] {
        let spec = OdometerSpec::new(digits.clone()).unwrap();
        let betas = digits.iter().map(|&d| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let cocycle = ProductCocycle::new(&spec, betas).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..500 {
            let x = spec.random_point(&mut r);
            let n = r.gen_range(0..=10_000u128);
            let closed = cocycle.birkhoff_sum(&spec, &x, n);
            let (mut y, mut direct) = (x.clone(), 0.0);
            for _ in 0..n {
                direct += cocycle.cocycle_value(&spec, &y);
                y = spec.step(&y, 1);
            }
            worst = worst.max((closed - direct).abs());
        }
        c.check(format!("digits {digits:?}: max |closed - direct| = {worst:.2e} <= 1e-12"), worst <= 1e-12);
    }
    c
}

fn section6() -> Section6 {
    build_section6(&Section6Params::new(vec![1, 1, 2], vec![2, 3, 2]).unwrap()).unwrap()
}

fn odometer_rigid(build: &Section6) -> Criterion {
    let mut c = Criterion::new(3, "rigid essential value certificates on the odometer", 60);
    let half = measure::ratio(1, 2);
    for k in 1..=2 {
        let meta = build.level(k);
        let cert = odometer_rigid_certificate(build, k, 1e-6, &default_rigid_ratio()).unwrap();
        let delta = measure::ratio(1, meta.m);
        c.check(
            format!("k = {k}, g_k = {:.6}: certificate passes, failed mass {}", meta.g, measure::fraction_string(&cert.failed_mass)),
            cert.pass,
        );
        c.check(
            format!("k = {k}: hit ratio {} >= 1/2", measure::fraction_string(&cert.min_hit_ratio)),
            cert.min_hit_ratio >= half,
        );
        c.check(
            format!("k = {k}: m(a sym T^-n a)/m(a) = {} < 1/m_k", measure::fraction_string(&cert.max_sym_ratio)),
            cert.max_sym_ratio < delta,
        );
        c.check(
            format!("k = {k}: covered mass {} = 1 - 1/m_k", measure::fraction_string(&cert.covered_mass)),
            cert.covered_mass == measure::one() - &delta,
        );
    }
    c
}

fn odometer_squash(build: &Section6) -> Criterion {
    let mut c = Criterion::new(4, "squash defects and exceptional masses on the odometer", 30);
    let squash = squash_translation(build, 2.0).unwrap();
    let mut r = rng(4);
    for meta in &build.levels {
        let k = meta.level;
        let bound = defect_bound(meta, 2.0);
        let (mut used, mut tries, mut worst) = (0, 0, 0.0f64);
        while used < 100 && tries < 1_000_000 {
            tries += 1;
            let x = build.spec.random_point(&mut r);
            if non_exceptional_at(build, &squash, &x, k) {
                worst = worst.max(coboundary_defect(build, &squash, &x)[k - 1]);
                used += 1;
            }
        }
        c.check(
            format!("k = {k}: defect {worst:.4} <= c m_k^(3/4)/nu_k = {bound:.4} on {used} points"),
            used == 100 && worst <= bound,
        );
        let ex = exceptional_mass(build, k);
        c.check(format!("k = {k}: exceptional count {} <= {:.1}", ex.count, ex.count_bound), ex.pass);
    }
    c
}

fn rotation_levels(pq: Vec<u64>, indices: &[usize], profile: Profile) -> Vec<RotationLevel> {
    let cf = ContinuedFraction::new(pq).unwrap();
    let params = section7_params(&cf, indices, profile, 1).unwrap();
    params.levels.iter().map(|lp| build_level(&cf, lp, 1).unwrap()).collect()
}

fn rotation(levels: &[RotationLevel]) -> Criterion {
    let mut c = Criterion::new(5, "smooth rotation cocycle, toy profile, p = 1", 120);
    let mut r = rng(5);
    let sampling = LevelSampling {
        coboundary: 10_000,
        ..LevelSampling::default()
    };
    for level in levels {
        let k = level.params.k;
        let rep = check_level(level, sampling, &mut r);
        c.check(
            format!("k = {k}: block sums vanish, max {:.2e} <= 1e-10", rep.block_sums.measured),
            rep.block_sums.measured <= 1e-10,
        );
        c.check(
            format!("k = {k}: F = G - G o T on 10^4 points, max {:.2e} <= 1e-10", rep.coboundary.measured),
            rep.coboundary.measured <= 1e-10,
        );
        c.check(
            format!(
                "k = {k}: sup|G| = {:.4} <= ell q sup|F| = {:.4}",
                rep.transfer_bound.measured, rep.transfer_bound.bound
            ),
            rep.transfer_bound.measured <= rep.transfer_bound.bound,
        );
        let top = desk_threshold(level.params.ell_half);
        let indices: Vec<u64> = (0..=top).collect();
        let f = |x: Point| eval_at(&level.f, x);
        let rigid = rigid_time_report(level, &indices, &f, 1e-9).unwrap();
        let err = rigid.rows.iter().map(|r| r.max_error).fold(0.0, f64::max);
        c.check(
            format!("k = {k}: rigid sums for i <= {top} match the closed form, max error {err:.2e} <= 1e-9"),
            rigid.rows.iter().all(|r| r.closed_form_pass),
        );
        let worst = rigid.rows.iter().map(|r| r.overlap.clone()).min().unwrap();
        c.check(
            format!("k = {k}: overlap ratio {} > 9/10", measure::fraction_string(&worst)),
            rigid.rows.iter().all(|r| r.overlap_pass),
        );
    }
    c
}

fn squash_checks(c: &mut Criterion, label: &str, levels: &[RotationLevel]) {
    let refs: Vec<&RotationLevel> = levels.iter().collect();
    let s = squash_rotation_search(&refs, 2.0).unwrap();
    for sc in &s.scales {
        c.check(
            format!("{label} k = {}: |c - lambda| = {:.4} <= 2c/c_k = {:.4}", sc.k, sc.gap, sc.gap_bound),
            sc.gap_pass,
        );
    }
    for sel in &s.selected {
        c.check(
            format!(
                "{label} k = {}: support {:.4} < (3 + log c)/k = {:.4}",
                sel.k,
                measure::to_f64(&sel.support),
                sel.support_bound
            ),
            sel.support_pass,
        );
    }
    c.check(
        format!("{label}: every level selected ({} of {})", s.selected.len(), levels.len()),
        s.selected.len() == levels.len(),
    );
    let terms: Vec<String> = s
        .selected
        .iter()
        .map(|t| format!("({:.3}, {:.3}, {:.3})", t.term_shift, t.term_scale, measure::to_f64(&t.support)))
        .collect();
    c.known_unattainable(
        format!("{label}: defect terms non-increasing across levels {}", terms.join(" -> ")),
        s.terms_decreasing,
    );
}

fn squash_search(toy: &[RotationLevel]) -> Criterion {
    let mut c = Criterion::new(6, "squash search over the rotation levels, c = 2", 120);
    let paper = rotation_levels(vec![1, 16, 480, 1, 1], &[2, 3], Profile::Paper);
    squash_checks(&mut c, "paper profile", &paper);
    squash_checks(&mut c, "toy profile", toy);
    c
}

fn return_machine() -> Criterion {
    let mut c = Criterion::new(7, "return machine with times c p q (1 +- eps)", 30);
    let order = 100_000u64;
    let sys = CyclicSystem::new(order).unwrap();
    let mut r = rng(7);
    for density in [0.3, 0.5, 0.8] {
        let mut set = vec![false; order as usize];
        let size = (density * order as f64).round() as usize;
        for i in rand::seq::index::sample(&mut r, order as usize, size) {
            set[i] = true;
        }
        for factor in [1.0, 1.5] {
            let label = format!("m(A) = {density}, c = {factor}");
            match hopf_return_machine(&sys, &set, factor, 0.1, 100, 25) {
                Ok(rep) => {
                    c.check(
                        format!(
                            "{label}: times [{}, {}] within [{}, {}]",
                            rep.min_time, rep.max_time, rep.lower, rep.upper
                        ),
                        rep.min_time as f64 >= rep.lower && rep.max_time as f64 <= rep.upper,
                    );
                    c.check(
                        format!("{label}: deficiency {:.4} < 0.1", measure::to_f64(&rep.deficiency)),
                        rep.deficiency < measure::from_f64(0.1),
                    );
                }
                Err(e) => c.check(format!("{label}: {e}"), false),
            }
        }
    }
    c
}

/// Two coboundary levels on `Z/1024 = Z/16 x Z/64`: `x mod 16` and
/// `16 floor(x / 16)`, certified towards the value 1.
fn accumulation_levels(noise: Option<(usize, f64)>) -> Vec<AccumulationLevel> {
    let windows = |count: u64| Partition::from_fn(1024, move |x| Some((x / 16) / (64 / count))).unwrap();
    let mut second: Vec<f64> = (0..1024u64).map(|x| 16.0 * (x / 16) as f64).collect();
    if let Some((digit, size)) = noise {
        for (x, v) in second.iter_mut().enumerate() {
            if x % 16 == digit {
                *v += size;
            }
        }
    }
    vec![
        AccumulationLevel {
            transfer: (0..1024u64).map(|x| (x % 16) as f64).collect(),
            partition: windows(2),
            bound: 1,
            eps: 0.25,
        },
        AccumulationLevel {
            transfer: second,
            partition: windows(4),
            bound: 2,
            eps: 0.05,
        },
    ]
}

fn accumulation() -> Criterion {
    let mut c = Criterion::new(8, "accumulation of coboundaries with negative controls", 30);
    let sys = CyclicSystem::new(1024).unwrap();
    let rep = accumulate_coboundaries(&sys, &accumulation_levels(None), 1.0).unwrap();
    for step in &rep.steps {
        c.check(
            format!(
                "level {}: full sum certified, window radius {:.3}, slack {:.3} <= {:.3}",
                step.level, step.full.window.radius, step.full.eps, step.slack_bound
            ),
            step.full.pass,
        );
    }
    c.check("two-level accumulation passes", rep.pass);

    let noisy = accumulate_coboundaries(&sys, &accumulation_levels(Some((3, 0.3))), 1.0);
    c.check(
        "noisy second level is attributed to level 2",
        matches!(noisy, Err(Error::LevelHypothesis { level: 2, .. })),
    );
    let mut broken = accumulation_levels(None);
    broken[0].transfer = vec![0.0; 1024];
    let broken = accumulate_coboundaries(&sys, &broken, 1.0);
    c.check(
        "zero first level is attributed to level 1",
        matches!(broken, Err(Error::LevelHypothesis { level: 1, .. })),
    );

    let levels = accumulation_levels(None);
    let phi = Coboundary::new(levels[0].transfer.clone()).unwrap();
    let window = Window::new(1.0, 0.25).unwrap();
    let cert = check_evc_finite(&sys, &phi, window, 0.25, &levels[0].partition, 1).unwrap();
    let psi = Tabulated::new((0..1024u64).map(|x| if x % 4 == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
    let violated = perturbation_check(&sys, &cert, &phi, &levels[0].partition, &psi, 0.05, 0.1);
    c.check(
        "perturbation of mass 1/4 outside V is rejected",
        matches!(violated, Err(Error::PerturbationHypothesis { .. })),
    );
    c
}

fn maharam() -> Criterion {
    let mut c = Criterion::new(9, "Maharam extension and dilation flow", 5);
    let mut r = rng(9);
    let weights: Vec<u64> = (0..7).map(|_| r.gen_range(1..100)).collect();
    let total: u64 = weights.iter().sum();
    let mut perm: Vec<usize> = (0..7).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
    let system = NonsingularSystem::new(weights.iter().map(|&w| measure::ratio(w, total)).collect(), perm).unwrap();
    let prod = build_maharam(&system).unwrap();
    for t in [-1.5, 0.3, 2.0] {
        let boxes: Vec<_> = (0..1000).map(|_| prod.random_box(&mut r)).collect();
        let rep = dilation_flow_check(&prod, t, r.gen_range(-1.0..1.0), &boxes, 1e-12).unwrap();
        c.check(format!("t = {t}: commutation and flow law exact"), rep.commutes && rep.flow_law);
        c.check(
            format!(
                "t = {t}: preservation {:.1e}, dilation {:.1e}, inverse {:.1e} <= 1e-12",
                rep.max_preservation_error, rep.max_dilation_error, rep.inverse_error
            ),
            rep.pass,
        );
    }
    c
}

fn timed(f: impl FnOnce() -> Criterion) -> Criterion {
    let start = Instant::now();
    let mut c = f();
    c.elapsed = start.elapsed();
    c
}

fn main() {
    let build = section6();
    let mut toy = Vec::new();
    let results = vec![
        timed(blocks),
        timed(telescoping),
        timed(|| odometer_rigid(&build)),
        timed(|| odometer_squash(&build)),
        timed(|| {
            toy = rotation_levels(vec![1, 256, 512, 1, 1], &[2, 3], Profile::Toy);
            rotation(&toy)
        }),
        timed(|| squash_search(&toy)),
        timed(return_machine),
        timed(accumulation),
        timed(maharam),
    ];
    let mut ok = true;
    for c in &results {
        println!(
            "{} criterion {}: {} ({:.2?}, limit {:?})",
            if c.pass() { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            c.elapsed,
            c.limit
        );
        for check in &c.checks {
            let tag = match (check.pass, check.known_unattainable) {
                (true, false) => "ok",
                (false, false) => "FAILED",
                (false, true) => "fails, known out of reach at desk scale",
                (true, true) => "PASSES UNEXPECTEDLY",
            };
            println!("    [{tag}] {}", check.what);
        }
        ok &= c.as_expected();
    }
    if !ok {
        eprintln!("acceptance: unexpected outcome");
        std::process::exit(1);
    }
}
