use std::time::Instant;

use psast_core::ast::{NodeTypeTable, Subtree, SubtreeChild};
use psast_core::embedding::*;
use psast_core::seed;
use rand::Rng;

/// Reconstruction distance computed term by term: each child gets its own
/// blended matrix `W_i = a_i W_l + b_i W_r`.
fn reference_distance(m: &EmbeddingModel, st: &Subtree) -> f64 {
    let dim = m.dim();
    let n = st.children.len();
    let mut z = m.bias.clone();
    for (pos, child) in st.children.iter().enumerate() {
        let i = pos + 1;
        let (a, b) = if n == 1 {
            (0.5, 0.5)
        } else {
            ((n - i) as f64 / (n - 1) as f64, (i - 1) as f64 / (n - 1) as f64)
        };
        let v = m.vectors.row(child.type_id as usize);
        for (r, zr) in z.iter_mut().enumerate() {
            let acc: f64 = v
                .iter()
                .enumerate()
                .map(|(c, x)| (a * m.w_left.get(r, c) + b * m.w_right.get(r, c)) * x)
                .sum();
            *zr += child.leaf_fraction * acc;
        }
    }
    let p = m.vectors.row(st.parent_type as usize);
    (0..dim).map(|r| (p[r] - z[r].tanh()).powi(2)).sum()
}

fn random_subtree<R: Rng>(rng: &mut R, types: u32) -> Subtree {
    let n = rng.gen_range(1..=5);
    let counts: Vec<u64> = (0..n).map(|_| rng.gen_range(1..6)).collect();
    let total: u64 = counts.iter().sum();
    Subtree::new(
        rng.gen_range(0..types),
        counts
            .iter()
            .map(|&c| SubtreeChild { type_id: rng.gen_range(0..types), leaf_fraction: c as f64 / total as f64 })
            .collect(),
    )
}

fn model(seed: u64, types: usize, dim: usize, scale: f64) -> EmbeddingModel {
    let names: Vec<String> = (0..types).map(|i| format!("T{i}")).collect();
    let table = NodeTypeTable::from_names(names).unwrap();
    init_model(&table, &TrainConfig { n_f: dim, init_scale: scale, seed, ..TrainConfig::default() }).unwrap()
}

#[test]
fn distance_matches_per_child_reference() {
    let mut rng = seed::rng(5);
    for s in 0..50 {
        let m = model(s, 9, 6, 0.7);
        let st = random_subtree(&mut rng, 9);
        let got = subtree_distance(&m, &st).unwrap();
        let want = reference_distance(&m, &st);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }
}

enum Param {
    Vector(usize, usize),
    Left(usize, usize),
    Right(usize, usize),
    Bias(usize),
}

fn slot<'a>(m: &'a mut EmbeddingModel, p: &Param) -> &'a mut f64 {
    match *p {
        Param::Vector(t, c) => &mut m.vectors.row_mut(t)[c],
        Param::Left(r, c) => &mut m.w_left.row_mut(r)[c],
        Param::Right(r, c) => &mut m.w_right.row_mut(r)[c],
        Param::Bias(r) => &mut m.bias[r],
    }
}

fn loss_at(m: &EmbeddingModel, st: &Subtree, st_c: &Subtree, delta: f64) -> f64 {
    hinge_loss(reference_distance(m, st), reference_distance(m, st_c), delta)
}

fn check(numeric: f64, analytic: f64) -> bool {
    let scale = numeric.abs().max(analytic.abs());
    scale < 1e-8 || (numeric - analytic).abs() <= 1e-4 * scale
}

#[test]
fn gradients_match_finite_differences() {
    let started = Instant::now();
    let (types, dim, delta, h) = (7usize, 5usize, 3.0, 1e-6);
    let mut rng = seed::rng(2024);
    for s in 0..20 {
        let mut m = model(100 + s, types, dim, 0.6);
        let st = random_subtree(&mut rng, types as u32);
        let st_c = corrupt_subtree(&st, 3, types, &mut rng).unwrap();
        let lg = loss_gradients(&m, &st, &st_c, delta).unwrap();
        assert!(delta + lg.d - lg.d_c > 1e-3, "triple {s} sits on the hinge");

        let mut params = Vec::new();
        for t in 0..types {
            for c in 0..dim {
                params.push(Param::Vector(t, c));
            }
        }
        for r in 0..dim {
            params.push(Param::Bias(r));
            for c in 0..dim {
                params.push(Param::Left(r, c));
                params.push(Param::Right(r, c));
            }
        }
        for p in &params {
            let analytic = match *p {
                Param::Vector(t, c) => lg.grads.vectors.get(&(t as u32)).map_or(0.0, |g| g[c]),
                Param::Left(r, c) => lg.grads.w_left.get(r, c),
                Param::Right(r, c) => lg.grads.w_right.get(r, c),
                Param::Bias(r) => lg.grads.bias[r],
            };
            let orig = *slot(&mut m, p);
            *slot(&mut m, p) = orig + h;
            let up = loss_at(&m, &st, &st_c, delta);
            *slot(&mut m, p) = orig - h;
            let down = loss_at(&m, &st, &st_c, delta);
            *slot(&mut m, p) = orig;
            let numeric = (up - down) / (2.0 * h);
            assert!(check(numeric, analytic), "triple {s}: numeric {numeric} analytic {analytic}");
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "took {:?}", started.elapsed());
}

#[test]
fn gradient_vanishes_when_margin_holds() {
    let m = model(1, 4, 3, 0.5);
    let st = Subtree::from_leaf_counts(0, &[(1, 1), (2, 1)]);
    let st_c = Subtree::from_leaf_counts(0, &[(3, 1), (2, 1)]);
    let lg = loss_gradients(&m, &st, &st_c, 0.0).unwrap();
    if lg.d <= lg.d_c {
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grads.is_zero());
    } else {
        let swapped = loss_gradients(&m, &st_c, &st, 0.0).unwrap();
        assert_eq!(swapped.loss, 0.0);
        assert!(swapped.grads.is_zero());
    }
}

#[test]
fn training_is_reproducible_and_model_files_round_trip() {
    let m = model(0, 6, 4, 0.1);
    let mut rng = seed::rng(9);
    let corpus: Vec<Subtree> = (0..60).map(|_| random_subtree(&mut rng, 6)).collect();
    let cfg = TrainConfig { epochs: 5, n_f: 4, seed: 11, ..TrainConfig::default() };
    let (a, ta) = train(&m.types, &corpus, &cfg).unwrap();
    let (b, tb) = train(&m.types, &corpus, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(ta.to_csv(), tb.to_csv());
    let back = EmbeddingModel::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    let (c, _) = train(&m.types, &corpus, &TrainConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.to_json(), c.to_json());
}
