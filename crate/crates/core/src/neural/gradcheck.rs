//! Central finite-difference verification of every registered op and both
//! encoders end-to-end. This is the numerical trust anchor for the whole
//! training stack, so it runs fast enough to sit in the test suite.

use super::models::{Dense, ImageCnn, Model, TextCnn};
use super::ops;
use super::tensor::Tensor;
use crate::embed::EmbeddingTable;
use crate::langgen::TokenSeq;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOLERANCE: f64 = 1e-3;
const H: f64 = 1e-4;
const DENOM_FLOOR: f64 = 1e-4;
const COORDS_PER_TENSOR: usize = 24;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checks: Vec<CheckResult>,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed())
    }

    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }
}

/// Compare analytic gradients of `loss_fn` against central differences on
/// up to `COORDS_PER_TENSOR` sampled coordinates per parameter. `loss_fn`
/// must rebuild the graph from the live parameter data on every call.
fn check(name: &str, params: &[Tensor], loss_fn: &dyn Fn() -> Tensor, rng: &mut ChaCha8Rng) -> CheckResult {
    let loss = loss_fn();
    loss.backward().expect("gradcheck loss must be scalar and attached");
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            let g = p.grad();
            if g.is_empty() {
                vec![0.0; p.len()]
            } else {
                g.clone()
            }
        })
        .collect();
    let mut max_rel_err: f64 = 0.0;
    let mut coords_checked = 0;
    for (p, grads) in params.iter().zip(&analytic) {
        let mut coords: Vec<usize> = (0..p.len()).collect();
        coords.shuffle(rng);
        coords.truncate(COORDS_PER_TENSOR);
        for i in coords {
            let original = p.data()[i];
            let mut values = p.data().clone();
            values[i] = original + H;
            p.set_data(&values);
            let up = loss_fn().item();
            values[i] = original - H;
            p.set_data(&values);
            let down = loss_fn().item();
            values[i] = original;
            p.set_data(&values);
            let numeric = (up - down) / (2.0 * H);
            let denom = grads[i].abs().max(numeric.abs()).max(DENOM_FLOOR);
            max_rel_err = max_rel_err.max((grads[i] - numeric).abs() / denom);
            coords_checked += 1;
        }
    }
    CheckResult { name: name.to_string(), max_rel_err, coords_checked }
}

fn randv(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Values kept away from zero so ReLU/max kinks sit outside the FD step.
fn randv_off_kink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Weighted sum with fixed random weights: exercises non-uniform output
/// gradients without adding differentiable structure of its own.
fn weighted_sum(x: &Tensor, weights: &Tensor) -> Tensor {
    ops::sum(&ops::mul(x, weights).unwrap()).unwrap()
}

pub fn run_all(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    let mut push = |r: CheckResult| report.checks.push(r);

    {
        let a = Tensor::param("a", &[2, 3], randv(&mut rng, 6));
        let b = Tensor::param("b", &[2, 3], randv(&mut rng, 6));
        let w = Tensor::constant(&[2, 3], randv(&mut rng, 6));
        let (pa, pb, pw) = (a.clone(), b.clone(), w.clone());
        push(check("add", &[a, b], &move || weighted_sum(&ops::add(&pa, &pb).unwrap(), &pw), &mut rng));
    }
    {
        let a = Tensor::param("a", &[2, 3], randv(&mut rng, 6));
        let b = Tensor::param("b", &[2, 3], randv(&mut rng, 6));
        let w = Tensor::constant(&[2, 3], randv(&mut rng, 6));
        let (pa, pb, pw) = (a.clone(), b.clone(), w.clone());
        push(check("sub", &[a, b], &move || weighted_sum(&ops::sub(&pa, &pb).unwrap(), &pw), &mut rng));
    }
    {
        let a = Tensor::param("a", &[4], randv(&mut rng, 4));
        let b = Tensor::param("b", &[4], randv(&mut rng, 4));
        let w = Tensor::constant(&[4], randv(&mut rng, 4));
        let (pa, pb, pw) = (a.clone(), b.clone(), w.clone());
        push(check("mul", &[a, b], &move || weighted_sum(&ops::mul(&pa, &pb).unwrap(), &pw), &mut rng));
    }
    {
        let a = Tensor::param("a", &[5], randv(&mut rng, 5));
        let w = Tensor::constant(&[5], randv(&mut rng, 5));
        let (pa, pw) = (a.clone(), w.clone());
        push(check("scale", &[a], &move || weighted_sum(&ops::scale(&pa, -1.7).unwrap(), &pw), &mut rng));
    }
    {
        let x = Tensor::param("x", &[3, 4], randv(&mut rng, 12));
        let b = Tensor::param("b", &[4], randv(&mut rng, 4));
        let w = Tensor::constant(&[3, 4], randv(&mut rng, 12));
        let (px, pb, pw) = (x.clone(), b.clone(), w.clone());
        push(check("add_bias", &[x, b], &move || weighted_sum(&ops::add_bias(&px, &pb).unwrap(), &pw), &mut rng));
    }
    {
        let a = Tensor::param("a", &[3, 4], randv(&mut rng, 12));
        let b = Tensor::param("b", &[4, 2], randv(&mut rng, 8));
        let w = Tensor::constant(&[3, 2], randv(&mut rng, 6));
        let (pa, pb, pw) = (a.clone(), b.clone(), w.clone());
        push(check("matmul", &[a, b], &move || weighted_sum(&ops::matmul(&pa, &pb).unwrap(), &pw), &mut rng));
    }
    {
        let x = Tensor::param("x", &[8], randv_off_kink(&mut rng, 8));
        let w = Tensor::constant(&[8], randv(&mut rng, 8));
        let (px, pw) = (x.clone(), w.clone());
        push(check("relu", &[x], &move || weighted_sum(&ops::relu(&px).unwrap(), &pw), &mut rng));
    }
    {
        let x = Tensor::param("x", &[6], randv(&mut rng, 6));
        let w = Tensor::constant(&[6], randv(&mut rng, 6));
        let (px, pw) = (x.clone(), w.clone());
        push(check("exp", &[x], &move || weighted_sum(&ops::exp(&px).unwrap(), &pw), &mut rng));
    }
    {
        // values away from the clip edges at +-0.5
        let x = Tensor::param("x", &[8], randv_off_kink(&mut rng, 8));
        let w = Tensor::constant(&[8], randv(&mut rng, 8));
        let (px, pw) = (x.clone(), w.clone());
        push(check("clip", &[x], &move || weighted_sum(&ops::clip(&px, -0.5, 0.5).unwrap(), &pw), &mut rng));
    }
    {
        // keep |a - b| away from zero so min ties stay outside the FD step
        let base = randv(&mut rng, 6);
        let offset: Vec<f64> = base.iter().map(|v| v + if *v > 0.0 { 0.3 } else { -0.3 }).collect();
        let a = Tensor::param("a", &[6], base);
        let b = Tensor::param("b", &[6], offset);
        let w = Tensor::constant(&[6], randv(&mut rng, 6));
        let (pa, pb, pw) = (a.clone(), b.clone(), w.clone());
        push(check("min_elem", &[a, b], &move || weighted_sum(&ops::min_elem(&pa, &pb).unwrap(), &pw), &mut rng));
    }
    {
        let x = Tensor::param("x", &[7], randv(&mut rng, 7));
        let px = x.clone();
        push(check("mean", &[x], &move || ops::mean(&px).unwrap(), &mut rng));
    }
    {
        let x = Tensor::param("x", &[7], randv(&mut rng, 7));
        let px = x.clone();
        push(check("sum", &[x], &move || ops::sum(&px).unwrap(), &mut rng));
    }
    {
        let x = Tensor::param("x", &[2, 5], randv(&mut rng, 10));
        let w = Tensor::constant(&[2, 5], randv(&mut rng, 10));
        let (px, pw) = (x.clone(), w.clone());
        push(check("softmax", &[x], &move || weighted_sum(&ops::softmax(&px).unwrap(), &pw), &mut rng));
    }
    {
        let x = Tensor::param("x", &[2, 5], randv(&mut rng, 10));
        let w = Tensor::constant(&[2, 5], randv(&mut rng, 10));
        let (px, pw) = (x.clone(), w.clone());
        push(check("log_softmax", &[x], &move || weighted_sum(&ops::log_softmax(&px).unwrap(), &pw), &mut rng));
    }
    {
        let x = Tensor::param("x", &[3, 4], randv(&mut rng, 12));
        let px = x.clone();
        push(check("gather_rows", &[x], &move || ops::sum(&ops::gather_rows(&px, &[1, 3, 0]).unwrap()).unwrap(), &mut rng));
    }
    {
        let table = Tensor::param("table", &[6, 3], randv(&mut rng, 18));
        let w = Tensor::constant(&[2, 3, 3], randv(&mut rng, 18));
        let (pt, pw) = (table.clone(), w.clone());
        push(check(
            "embedding_lookup",
            &[table],
            &move || weighted_sum(&ops::embedding_lookup(&pt, &[vec![2, 4, 1], vec![5, 3, 2]], Some(0)).unwrap(), &pw),
            &mut rng,
        ));
    }
    {
        let x = Tensor::param("x", &[2, 7, 3], randv(&mut rng, 42));
        let f = Tensor::param("f", &[4, 3, 3], randv(&mut rng, 36));
        let b = Tensor::param("b", &[4], randv(&mut rng, 4));
        let w = Tensor::constant(&[2, 5, 4], randv(&mut rng, 40));
        let (px, pf, pb, pw) = (x.clone(), f.clone(), b.clone(), w.clone());
        push(check("conv1d", &[x, f, b], &move || weighted_sum(&ops::conv1d(&px, &pf, &pb).unwrap(), &pw), &mut rng));
    }
    {
        let x = Tensor::param("x", &[2, 2, 5, 5], randv(&mut rng, 100));
        let f = Tensor::param("f", &[3, 2, 3, 3], randv(&mut rng, 54));
        let b = Tensor::param("b", &[3], randv(&mut rng, 3));
        let w = Tensor::constant(&[2, 3, 2, 2], randv(&mut rng, 24));
        let (px, pf, pb, pw) = (x.clone(), f.clone(), b.clone(), w.clone());
        push(check("conv2d", &[x, f, b], &move || weighted_sum(&ops::conv2d(&px, &pf, &pb, 2).unwrap(), &pw), &mut rng));
    }
    {
        // spread values so the argmax is stable under the FD step
        let n = 2 * 5 * 3;
        let vals: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let x = Tensor::param("x", &[2, 5, 3], vals);
        let w = Tensor::constant(&[2, 3], randv(&mut rng, 6));
        let (px, pw) = (x.clone(), w.clone());
        push(check("max_over_time", &[x], &move || weighted_sum(&ops::max_over_time(&px, &[4, 5]).unwrap(), &pw), &mut rng));
    }
    {
        let x = Tensor::param("x", &[2, 3, 2], randv(&mut rng, 12));
        let y = Tensor::param("y", &[2, 2], randv(&mut rng, 4));
        let w = Tensor::constant(&[2, 8], randv(&mut rng, 16));
        let (px, py, pw) = (x.clone(), y.clone(), w.clone());
        push(check(
            "flatten_concat",
            &[x, y],
            &move || {
                let flat = ops::flatten_rows(&px).unwrap();
                weighted_sum(&ops::concat_cols(&[flat, py.clone()]).unwrap(), &pw)
            },
            &mut rng,
        ));
    }

    // full Text-CNN with a classification-style loss on a 2-sentence batch
    {
        let mut init = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let emb = EmbeddingTable::learned(20, 5, &mut init);
        let net = TextCnn::new(emb, 9, &mut init);
        let head = Dense::new("head", net.feature_dim(), 4, &mut init);
        let mut params = net.parameters();
        params.extend(head.parameters());
        let seqs = vec![
            TokenSeq { ids: vec![3, 7, 2, 11, 5, 0, 0, 0, 0], true_length: 5 },
            // both sentences at least as long as the widest filter so no
            // pooled window ever reads a PAD position (FD would otherwise
            // see the frozen PAD row as an input)
            TokenSeq { ids: vec![14, 9, 4, 12, 6, 8, 0, 0, 0], true_length: 6 },
        ];
        push(check(
            "textcnn_full",
            &params,
            &move || {
                let feats = net.encode(&seqs).unwrap();
                let logits = head.forward(&feats).unwrap();
                let logp = ops::log_softmax(&logits).unwrap();
                let picked = ops::gather_rows(&logp, &[1, 3]).unwrap();
                ops::scale(&ops::mean(&picked).unwrap(), -1.0).unwrap()
            },
            &mut rng,
        ));
    }

    // full image CNN on a small frame
    {
        let mut init = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
        let net = ImageCnn::new(2, 9, 11, &mut init);
        let head = Dense::new("head", net.feature_dim(), 4, &mut init);
        let mut params = net.parameters();
        params.extend(head.parameters());
        let x = Tensor::constant(&[2, 2, 9, 11], randv(&mut rng, 2 * 2 * 9 * 11));
        push(check(
            "imagecnn_full",
            &params,
            &move || {
                let feats = net.encode(&x).unwrap();
                let logits = head.forward(&feats).unwrap();
                let logp = ops::log_softmax(&logits).unwrap();
                let picked = ops::gather_rows(&logp, &[0, 2]).unwrap();
                ops::scale(&ops::mean(&picked).unwrap(), -1.0).unwrap()
            },
            &mut rng,
        ));
    }

    report
}
