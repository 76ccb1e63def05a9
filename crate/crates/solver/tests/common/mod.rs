use billopt_solver::{LpProblem, Sense, VarId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(dead_code)]
pub fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LpProblem<f64> {
    let mut lp = LpProblem::new("rand");
    let vars: Vec<VarId> = (0..n)
        .map(|j| {
            let lo = rng.gen_range(-5..=2) as f64;
            let hi = lo + rng.gen_range(0..=6) as f64;
            lp.add_var(format!("x{j}"), lo, hi, rng.gen_range(-4..=4) as f64)
        })
        .collect();
    for i in 0..m {
        let mut terms = Vec::new();
        for &v in &vars {
            if rng.gen_bool(0.6) {
                terms.push((v, rng.gen_range(-3..=3) as f64));
            }
        }
        let sense = match rng.gen_range(0..5) {
            0 => Sense::Eq,
            1 | 2 => Sense::Ge,
            _ => Sense::Le,
        };
        lp.add_row(format!("r{i}"), terms, sense, rng.gen_range(-6..=6) as f64);
    }
    lp
}

/// Month-shaped storage LP: SOC chain, charge/discharge, a running peak.
#[allow(dead_code)]
pub fn storage_lp(t: usize, seed: u64) -> LpProblem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lp = LpProblem::new("storage");
    let peak = lp.add_var("peak", 0.0, f64::INFINITY, 15.0);
    let mut prev = None;
    for k in 0..t {
        let load = 50.0 + 40.0 * ((k as f64) * 0.26).sin().abs() + rng.gen_range(0.0..10.0);
        let price = if (k % 24) >= 12 && (k % 24) < 18 { 0.3 } else { 0.1 };
        let net = lp.add_var(format!("net{k}"), f64::NEG_INFINITY, f64::INFINITY, price);
        let soc = lp.add_var(format!("soc{k}"), 0.0, 100.0, 0.0);
        let ch = lp.add_var(format!("ch{k}"), 0.0, f64::INFINITY, 0.0);
        let dis = lp.add_var(format!("dis{k}"), 0.0, f64::INFINITY, 0.0);
        let mut terms = vec![(soc, 1.0), (ch, -0.9), (dis, 1.0)];
        let rhs = match prev {
            Some(p) => {
                terms.push((p, -1.0));
                0.0
            }
            None => 50.0,
        };
        lp.add_row(format!("soc{k}"), terms, Sense::Eq, rhs);
        lp.add_row(format!("bal{k}"), vec![(net, 1.0), (ch, -1.0), (dis, 1.0)], Sense::Eq, load);
        lp.add_row(format!("pw{k}"), vec![(ch, 1.0), (dis, 1.0)], Sense::Le, 50.0);
        lp.add_row(format!("pk{k}"), vec![(net, 1.0), (peak, -1.0)], Sense::Le, 0.0);
        prev = Some(soc);
    }
    lp.add_row("end", vec![(prev.unwrap(), 1.0)], Sense::Eq, 50.0);
    lp
}

/// Random LP that is feasible by construction: right-hand sides are set around
/// the activity of a random point inside the variable box.
#[allow(dead_code)]
pub fn feasible_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LpProblem<f64> {
    let mut lp = LpProblem::new("feasible");
    let mut point = Vec::with_capacity(n);
    let vars: Vec<VarId> = (0..n)
        .map(|j| {
            let lo: f64 = rng.gen_range(-10.0..5.0);
            let hi = if rng.gen_bool(0.2) { f64::INFINITY } else { lo + rng.gen_range(0.5..20.0) };
            point.push(lo + rng.gen_range(0.0..(hi.min(lo + 20.0) - lo)));
            lp.add_var(format!("x{j}"), lo, hi, rng.gen_range(-5.0..5.0))
        })
        .collect();
    for i in 0..m {
        let mut terms = Vec::new();
        for &v in &vars {
            if rng.gen_bool(0.3) {
                terms.push((v, rng.gen_range(-4.0..4.0)));
            }
        }
        let act: f64 = terms.iter().map(|&(v, a)| a * point[v.0]).sum();
        let (sense, rhs) = match rng.gen_range(0..6) {
            0 => (Sense::Eq, act),
            1 | 2 => (Sense::Ge, act - rng.gen_range(0.0..5.0)),
            _ => (Sense::Le, act + rng.gen_range(0.0..5.0)),
        };
        lp.add_row(format!("r{i}"), terms, sense, rhs);
    }
    lp
}
