use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::blocks::{
    balanced_block, canonical_block, find_witness_shift, shift_match_count, tail_mass_check, GammaVector,
    DEFAULT_MATCH_TOL,
};
use crate::evc::{default_rigid_ratio, odometer_rigid_certificate};
use crate::measure;
use crate::odometer::{
    build_section6, coboundary_defect, defect_bound, exceptional_mass, non_exceptional_at, squash_translation,
    Section6, Section6Params,
};
use crate::report::Report;

use super::{BlocksArgs, Cli, Command, OdometerArgs, Outcome};

mod rotation;
mod systems;

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    match &cli.command {
        Command::Blocks(a) => blocks(cli, a),
        Command::Odometer(a) => odometer(cli, a, &mut rng),
        Command::Rotation(a) => rotation::rotation(cli, a, &mut rng),
        Command::Evc(a) => systems::evc(cli, a),
        Command::Maharam(a) => systems::maharam(cli, a, &mut rng),
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn blocks(cli: &Cli, a: &BlocksArgs) -> anyhow::Result<Outcome> {
    let gamma = GammaVector::new(a.gamma.clone())?;
    let tol = cli.tolerance.unwrap_or(DEFAULT_MATCH_TOL);
    let canonical = canonical_block(&gamma);
    let balanced = balanced_block(&gamma);
    let mut report = Report::new("blocks", cli.seed, json!({"gamma": a.gamma, "verify": a.verify, "tolerance": tol}));
    report.detail("canonical_length", canonical.len());
    report.detail("balanced_length", balanced.len());
    if a.verify {
        let m = gamma.order();
        for (j, &g) in gamma.entries().iter().enumerate() {
            let shift = 1usize << j;
            if canonical.len() > shift {
                let count = shift_match_count(&canonical, shift, g, tol)?;
                let need = canonical.len() / 2;
                report.check(
                    format!("canonical gamma_{} count", j + 1),
                    format!("matches of gamma_{} at shift {shift} >= 2^{m}/2", j + 1),
                    count,
                    need,
                    count >= need,
                );
            }
            let need = balanced.len() / 2;
            let (n, count) = match find_witness_shift(&balanced, g, tol) {
                Some(n) => (Some(n), shift_match_count(&balanced, n, g, tol)?),
                None => (None, 0),
            };
            report.check(
                format!("balanced gamma_{} count", j + 1),
                format!("matches of gamma_{} at the smallest witness shift >= 4^{m}/2", j + 1),
                count,
                need,
                count >= need,
            );
            report.check(
                format!("balanced gamma_{} shift", j + 1),
                format!("smallest witness shift for gamma_{} <= 2^{}", j + 1, j),
                n,
                shift,
                n.is_some_and(|n| n <= shift),
            );
        }
        let tail = tail_mass_check(&balanced, None)?;
        report.check(
            "balanced tail",
            format!("#{{|b| >= m^(3/4)}} <= max|gamma|^2 4^m / sqrt(m), threshold {}", tail.threshold),
            tail.count,
            tail.bound,
            tail.pass,
        );
    }
    let tables = vec![
        ("blocks_canonical.csv".to_string(), csv_bytes(|b| Ok(canonical.write_csv(b)?))?),
        ("blocks_balanced.csv".to_string(), csv_bytes(|b| Ok(balanced.write_csv(b)?))?),
    ];
    Ok(Outcome { report, tables })
}

fn section6(mu: &[u64], nu: &[u64]) -> anyhow::Result<Section6> {
    let params = Section6Params::new(
        mu.iter().map(|&v| v as u128).collect(),
        nu.iter().map(|&v| v as u128).collect(),
    )?;
    Ok(build_section6(&params)?)
}

fn odometer(cli: &Cli, a: &OdometerArgs, rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
    let build = section6(&a.mu, &a.nu)?;
    let squash = squash_translation(&build, a.c)?;
    let mut report = Report::new(
        "odometer",
        cli.seed,
        json!({"mu": a.mu, "nu": a.nu, "c": a.c, "samples": a.samples, "evc": a.evc, "radius": a.radius}),
    );
    report.detail("digits", build.spec.digits());
    report.detail("levels", &build.levels);
    report.detail("squash", &squash);

    for meta in &build.levels {
        let need = meta.window.div_ceil(2);
        let worst = meta.witness_counts.iter().copied().min().unwrap_or(0);
        report.check(
            format!("level {} witness counts", meta.level),
            "matches of g_k at n(j, k) in every window >= 4^m/2",
            worst,
            need,
            worst >= need,
        );
        let ex = exceptional_mass(&build, meta.level);
        report.check(
            format!("level {} exceptional mass", meta.level),
            format!("#{{|beta_k| >= m_k^(3/4)}} <= e^(2 mu_k) a_k / sqrt(m_k), mass {}", ex.mass),
            ex.count,
            ex.count_bound,
            ex.pass,
        );
    }

    let levels = build.levels.len();
    let mut worst = vec![0.0f64; levels];
    let mut used = vec![0usize; levels];
    for _ in 0..a.samples {
        let x = build.spec.random_point(rng);
        let defects = coboundary_defect(&build, &squash, &x);
        for k in 1..=levels {
            if non_exceptional_at(&build, &squash, &x, k) {
                worst[k - 1] = worst[k - 1].max(defects[k - 1]);
                used[k - 1] += 1;
            }
        }
    }
    for meta in &build.levels {
        let bound = defect_bound(meta, a.c);
        let k = meta.level;
        report.check(
            format!("level {k} squash defect"),
            format!(
                "|beta_k(Sx) - c beta_k(x)| <= c m_k^(3/4) / nu_k on {} non-exceptional samples",
                used[k - 1]
            ),
            worst[k - 1],
            bound,
            worst[k - 1] <= bound,
        );
    }

    if a.evc {
        let half = measure::ratio(1, 2);
        let mut certs = Vec::new();
        for meta in &build.levels {
            if meta.m < 2 {
                continue;
            }
            let cert = odometer_rigid_certificate(&build, meta.level, a.radius, &default_rigid_ratio())?;
            let k = meta.level;
            let delta = measure::ratio(1, meta.m);
            report.check(
                format!("level {k} rigid certificate"),
                format!(
                    "failed cell mass <= 1/m_k with hit ratio above {}",
                    measure::fraction_string(&cert.ratio)
                ),
                measure::fraction_string(&cert.failed_mass),
                measure::fraction_string(&cert.delta),
                cert.pass,
            );
            report.check(
                format!("level {k} hit ratio"),
                "m(a and [phi_n near g_k]) / m(a) >= 1/2",
                measure::fraction_string(&cert.min_hit_ratio),
                "1/2",
                cert.min_hit_ratio >= half,
            );
            report.check(
                format!("level {k} return ratio"),
                "m(a sym T^-n a) / m(a) < 1/m_k",
                measure::fraction_string(&cert.max_sym_ratio),
                measure::fraction_string(&delta),
                cert.max_sym_ratio < delta,
            );
            certs.push(json!({"level": k, "certificate": cert}));
        }
        report.detail("rigid_certificates", certs);
    }

    let trace = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["step", "index", "cocycle", "birkhoff_sum"])?;
        let mut x = build.spec.random_point(rng);
        let mut sum = 0.0;
        for step in 0..a.trace {
            let value = build.cocycle.cocycle_value(&build.spec, &x);
            w.write_record([
                step.to_string(),
                build.spec.index_of(&x).to_string(),
                value.to_string(),
                sum.to_string(),
            ])?;
            sum += value;
            x = build.spec.step(&x, 1);
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(Outcome {
        report,
        tables: vec![("odometer_orbit.csv".to_string(), trace)],
    })
}

/// Builds the odometer used by `evc --system odometer`.
pub(super) fn odometer_system(mu: Option<&Vec<u64>>, nu: Option<&Vec<u64>>) -> anyhow::Result<Section6> {
    let (Some(mu), Some(nu)) = (mu, nu) else {
        bail!("--system odometer needs --mu and --nu");
    };
    section6(mu, nu).context("building the odometer")
}

