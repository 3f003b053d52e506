use std::sync::Arc;

use nehari_lab::energy::{lower_bound_check, nehari_diagnostics, project_to_nehari, Problem};
use nehari_lab::grid::{build_grid, DomainSpec, Field, Grid, State};
use nehari_lab::model::{ModelP, PowerCouplingParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
    let modes: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| {
            (
                rng.gen_range(0.5..4.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let raw = grid.field_from_fn(|x, y| {
        modes
            .iter()
            .map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin())
            .sum::<f64>()
    });
    let (mn, mx) = raw
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = (mx - mn).max(1e-12);
    let vals: Vec<f64> = raw
        .values()
        .iter()
        .map(|&v| lo + (hi - lo) * (v - mn) / span)
        .collect();
    grid.field_from_values(vals).unwrap()
}

fn segregated_pair(grid: &Grid, rng: &mut ChaCha8Rng) -> State {
    let a = random_field(grid, rng, 0.2, 1.5);
    let b = random_field(grid, rng, 0.2, 1.5);
    let xs = grid.field_from_fn(|x, _| x);
    let (mn, mx) = xs
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let mid = 0.5 * (mn + mx);
    let span = (mx - mn).max(1e-12);
    let sharp = 40.0 / span;
    let gap = 0.08 * span;
    let left: Vec<f64> = xs
        .values()
        .iter()
        .map(|&x| 0.5 * (1.0 - ((x - (mid - gap)) * sharp).tanh()))
        .collect();
    let right: Vec<f64> = xs
        .values()
        .iter()
        .map(|&x| 0.5 * (1.0 + ((x - (mid + gap)) * sharp).tanh()))
        .collect();
    let u: Vec<f64> = a
        .values()
        .iter()
        .zip(&left)
        .map(|(&av, &m)| av * m)
        .collect();
    let v: Vec<f64> = b
        .values()
        .iter()
        .zip(&right)
        .map(|(&bv, &m)| bv * m)
        .collect();
    State::new(vec![
        grid.field_from_values(u).unwrap(),
        grid.field_from_values(v).unwrap(),
    ])
}

#[test]
fn probe_slack() {
    // Scalar population
    let grid = Arc::new(build_grid(&DomainSpec::Interval { length: 1.0, n: 64 }).unwrap());
    let model = ModelP::power(PowerCouplingParams::scalar(4.0, 1.0)).unwrap();
    let problem =
        Problem::with_constant_potentials(grid, model, &[0.0], &[1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::INFINITY;
    let mut worst_info = String::new();
    for k in 0..100 {
        let f = random_field(&problem.grid, &mut rng, 0.1, 2.0);
        let (t, projected, _) = project_to_nehari(&problem, &State::new(vec![f])).unwrap();
        let s = lower_bound_check(&problem, &projected, 2.0).unwrap();
        if s < worst {
            worst = s;
            let d = nehari_diagnostics(&problem, &projected).unwrap();
            worst_info = format!(
                "scalar #{} t={:?} F={:?} norms={:?}",
                k, t, d.residuals, d.norms
            );
        }
    }
    println!("scalar worst slack {worst:.3e} :: {worst_info}");

    for &beta in &[0.1f64, 1.0, 10.0] {
        let grid = Arc::new(build_grid(&DomainSpec::Interval { length: 1.0, n: 64 }).unwrap());
        let model = ModelP::power(PowerCouplingParams::cubic_pair([1.0, 1.0], beta)).unwrap();
        let problem =
            Problem::with_constant_potentials(grid, model, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(200 + beta as u64);
        let mut worst = f64::INFINITY;
        let mut worst_info = String::new();
        for k in 0..100 {
            let state = segregated_pair(&problem.grid, &mut rng);
            if let Ok((t, projected, _)) = project_to_nehari(&problem, &state) {
                let s = lower_bound_check(&problem, &projected, 2.0).unwrap();
                if s < worst {
                    worst = s;
                    let d = nehari_diagnostics(&problem, &projected).unwrap();
                    worst_info = format!(
                        "pair #{} t={:?} F={:?} norms={:?}",
                        k, t, d.residuals, d.norms
                    );
                }
            }
        }
        println!("beta={beta} worst slack {worst:.3e} :: {worst_info}");
    }
}
