// debug which property violates
use nhmc_core::chain_model::{matrix_norm, StochasticMatrix};
use nhmc_core::ergodic_analysis::dobrushin_delta;
use nhmc_core::rng;

fn random_matrix(k: usize, seed: u64, salt: u64) -> StochasticMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let raw: Vec<f64> = (0..k)
                .map(|j| rng::uniform(seed, salt + (i * k + j) as u64) + 1e-6)
                .collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    StochasticMatrix::validate(&rows, 1e-9).unwrap()
}

fn delta_half_l1(p: &StochasticMatrix<f64>) -> f64 {
    let k = p.dim();
    let mut best = 0.0f64;
    for i in 0..k {
        for l in 0..k {
            let s: f64 = (0..k).map(|j| (p.get(i, j) - p.get(l, j)).abs()).sum();
            best = best.max(0.5 * s);
        }
    }
    best
}

fn main() {
    let (mut v_norm, mut v_sub, mut v_range, mut v_half, mut v_dsub) = (0, 0, 0, 0, 0);
    let mut worst_half = 0.0f64;
    for trial in 0..1000u64 {
        let a = random_matrix(5, 0x905A1C + trial, 0);
        let b = random_matrix(5, 0x905A1C + trial, 1000);
        let na = matrix_norm(a.as_square());
        let nb = matrix_norm(b.as_square());
        if na != 1.0 || nb != 1.0 { v_norm += 1; if v_norm < 3 { println!("norm: {na:.20e} {nb:.20e}"); } }
        let nprod = matrix_norm(&a.as_square().mul(b.as_square()));
        if nprod > na * nb + 1e-12 { v_sub += 1; }
        let da = dobrushin_delta(&a);
        let db = dobrushin_delta(&b);
        if !(0.0..=1.0).contains(&da) || !(0.0..=1.0).contains(&db) { v_range += 1; }
        let gap = (da - delta_half_l1(&a)).abs();
        worst_half = worst_half.max(gap);
        if gap > 1e-12 { v_half += 1; }
        let dprod = dobrushin_delta(&a.mul(&b));
        if dprod > da * db + 1e-12 { v_dsub += 1; }
    }
    println!("norm={v_norm} sub={v_sub} range={v_range} half={v_half} (worst {worst_half:e}) dsub={v_dsub}");
}
