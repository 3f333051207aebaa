//! Differentiable operations over [`Tensor`].
//!
//! Every op validates shapes, computes the forward value, and registers a
//! backward closure when an input is trainable. Reductions accumulate in
//! f64 throughout.

use super::tensor::Tensor;
use super::NeuralError;

type Result<T> = std::result::Result<T, NeuralError>;

fn shape_err(op: &str, expected: String, got: String) -> NeuralError {
    NeuralError::ShapeMismatch { op: op.to_string(), expected, got }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

/// Elementwise sum of two same-shape tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |out| {
            let g = out.grad();
            if pa.requires_grad() {
                pa.accumulate_grad(g.iter().copied().enumerate());
            }
            if pb.requires_grad() {
                pb.accumulate_grad(g.iter().copied().enumerate());
            }
        }),
    ))
}

/// Elementwise difference a - b.
pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let data: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x - y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |out| {
            let g = out.grad();
            if pa.requires_grad() {
                pa.accumulate_grad(g.iter().copied().enumerate());
            }
            if pb.requires_grad() {
                pb.accumulate_grad(g.iter().map(|v| -v).enumerate());
            }
        }),
    ))
}

/// Elementwise product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |out| {
            let g = out.grad();
            if pa.requires_grad() {
                let bd = pb.data();
                pa.accumulate_grad(g.iter().zip(bd.iter()).map(|(gv, bv)| gv * bv).enumerate());
            }
            if pb.requires_grad() {
                let ad = pa.data();
                pb.accumulate_grad(g.iter().zip(ad.iter()).map(|(gv, av)| gv * av).enumerate());
            }
        }),
    ))
}

/// Multiply by a compile-time constant.
pub fn scale(x: &Tensor, c: f64) -> Result<Tensor> {
    let data: Vec<f64> = x.data().iter().map(|v| v * c).collect();
    let px = x.clone();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            px.accumulate_grad(g.iter().map(|v| v * c).enumerate());
        }),
    ))
}

/// Add a constant offset elementwise.
pub fn add_scalar(x: &Tensor, c: f64) -> Result<Tensor> {
    let data: Vec<f64> = x.data().iter().map(|v| v + c).collect();
    let px = x.clone();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            px.accumulate_grad(g.iter().copied().enumerate());
        }),
    ))
}

/// Broadcast a length-N bias over the rows of a (B, N) matrix.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (xs, bs) = (x.shape(), bias.shape());
    if xs.len() != 2 || bs.len() != 1 || xs[1] != bs[0] {
        return Err(shape_err("add_bias", format!("(B, {})", bs.first().copied().unwrap_or(0)), format!("{xs:?} + {bs:?}")));
    }
    let (rows, cols) = (xs[0], xs[1]);
    let bd = bias.data().clone();
    let data: Vec<f64> = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| v + bd[i % cols])
        .collect();
    let (px, pb) = (x.clone(), bias.clone());
    Ok(Tensor::from_op(
        vec![rows, cols],
        data,
        vec![x.clone(), bias.clone()],
        Box::new(move |out| {
            let g = out.grad();
            if px.requires_grad() {
                px.accumulate_grad(g.iter().copied().enumerate());
            }
            if pb.requires_grad() {
                pb.accumulate_grad((0..g.len()).map(|i| (i % cols, g[i])));
            }
        }),
    ))
}

/// (M, K) x (K, N) matrix product.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(shape_err("matmul", format!("({}, K) x (K, N)", sa.first().copied().unwrap_or(0)), format!("{sa:?} x {sb:?}")));
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let ad = a.data();
    let bd = b.data();
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            let orow = &mut data[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    drop(ad);
    drop(bd);
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        vec![m, n],
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |out| {
            let g = out.grad();
            if pa.requires_grad() {
                // dA = G x B^T
                let bd = pb.data();
                pa.accumulate_grad((0..m * k).map(|idx| {
                    let (i, p) = (idx / k, idx % k);
                    let mut v = 0.0;
                    for j in 0..n {
                        v += g[i * n + j] * bd[p * n + j];
                    }
                    (idx, v)
                }));
            }
            if pb.requires_grad() {
                // dB = A^T x G
                let ad = pa.data();
                pb.accumulate_grad((0..k * n).map(|idx| {
                    let (p, j) = (idx / n, idx % n);
                    let mut v = 0.0;
                    for i in 0..m {
                        v += ad[i * k + p] * g[i * n + j];
                    }
                    (idx, v)
                }));
            }
        }),
    ))
}

/// Elementwise max(x, 0).
pub fn relu(x: &Tensor) -> Result<Tensor> {
    let data: Vec<f64> = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let px = x.clone();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            let xd = px.data();
            px.accumulate_grad(
                g.iter()
                    .zip(xd.iter())
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .enumerate(),
            );
        }),
    ))
}

/// Elementwise exponential.
pub fn exp(x: &Tensor) -> Result<Tensor> {
    let data: Vec<f64> = x.data().iter().map(|v| v.exp()).collect();
    let px = x.clone();
    let cached = data.clone();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            px.accumulate_grad(g.iter().zip(cached.iter()).map(|(gv, ev)| gv * ev).enumerate());
        }),
    ))
}

/// Clamp into [lo, hi]; gradient passes only strictly inside the band.
pub fn clip(x: &Tensor, lo: f64, hi: f64) -> Result<Tensor> {
    let data: Vec<f64> = x.data().iter().map(|v| v.clamp(lo, hi)).collect();
    let px = x.clone();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            let xd = px.data();
            px.accumulate_grad(
                g.iter()
                    .zip(xd.iter())
                    .map(|(&gv, &xv)| if xv > lo && xv < hi { gv } else { 0.0 })
                    .enumerate(),
            );
        }),
    ))
}

/// Elementwise minimum; ties route the gradient to `a`.
pub fn min_elem(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("min_elem", a, b)?;
    let data: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x.min(y)).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |out| {
            let g = out.grad();
            let (ad, bd) = (pa.data(), pb.data());
            if pa.requires_grad() {
                pa.accumulate_grad(
                    g.iter()
                        .enumerate()
                        .map(|(i, &gv)| (i, if ad[i] <= bd[i] { gv } else { 0.0 })),
                );
            }
            if pb.requires_grad() {
                pb.accumulate_grad(
                    g.iter()
                        .enumerate()
                        .map(|(i, &gv)| (i, if bd[i] < ad[i] { gv } else { 0.0 })),
                );
            }
        }),
    ))
}

/// Mean of all elements, as a scalar.
pub fn mean(x: &Tensor) -> Result<Tensor> {
    let n = x.len();
    if n == 0 {
        return Err(shape_err("mean", "non-empty".into(), "[0]".into()));
    }
    let value = x.data().iter().sum::<f64>() / n as f64;
    let px = x.clone();
    Ok(Tensor::from_op(
        vec![],
        vec![value],
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad()[0] / n as f64;
            px.accumulate_grad((0..n).map(|i| (i, g)));
        }),
    ))
}

/// Sum of all elements, as a scalar.
pub fn sum(x: &Tensor) -> Result<Tensor> {
    let n = x.len();
    let value = x.data().iter().sum::<f64>();
    let px = x.clone();
    Ok(Tensor::from_op(
        vec![],
        vec![value],
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad()[0];
            px.accumulate_grad((0..n).map(|i| (i, g)));
        }),
    ))
}

fn last_dim_view(shape: &[usize]) -> (usize, usize) {
    let n = *shape.last().unwrap_or(&1);
    let rows = shape.iter().product::<usize>() / n.max(1);
    (rows, n)
}

/// Softmax over the last dimension.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.shape().is_empty() {
        return Err(shape_err("softmax", "rank >= 1".into(), "scalar".into()));
    }
    let (rows, n) = last_dim_view(x.shape());
    let xd = x.data();
    let mut data = vec![0.0; rows * n];
    for r in 0..rows {
        let row = &xd[r * n..(r + 1) * n];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - m).exp();
            data[r * n + j] = e;
            z += e;
        }
        for j in 0..n {
            data[r * n + j] /= z;
        }
    }
    drop(xd);
    let px = x.clone();
    let cached = data.clone();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            let mut contrib = Vec::with_capacity(rows * n);
            for r in 0..rows {
                let y = &cached[r * n..(r + 1) * n];
                let dot: f64 = (0..n).map(|j| g[r * n + j] * y[j]).sum();
                for j in 0..n {
                    contrib.push((r * n + j, y[j] * (g[r * n + j] - dot)));
                }
            }
            px.accumulate_grad(contrib.into_iter());
        }),
    ))
}

/// Log-softmax over the last dimension.
pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    if x.shape().is_empty() {
        return Err(shape_err("log_softmax", "rank >= 1".into(), "scalar".into()));
    }
    let (rows, n) = last_dim_view(x.shape());
    let xd = x.data();
    let mut data = vec![0.0; rows * n];
    for r in 0..rows {
        let row = &xd[r * n..(r + 1) * n];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        for j in 0..n {
            data[r * n + j] = row[j] - lse;
        }
    }
    drop(xd);
    let px = x.clone();
    let cached = data.clone();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            let mut contrib = Vec::with_capacity(rows * n);
            for r in 0..rows {
                let logp = &cached[r * n..(r + 1) * n];
                let gsum: f64 = (0..n).map(|j| g[r * n + j]).sum();
                for j in 0..n {
                    contrib.push((r * n + j, g[r * n + j] - logp[j].exp() * gsum));
                }
            }
            px.accumulate_grad(contrib.into_iter());
        }),
    ))
}

/// Pick one column per row of a (B, N) matrix: out[b] = x[b, idx[b]].
pub fn gather_rows(x: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 2 || indices.len() != s[0] {
        return Err(shape_err(
            "gather_rows",
            format!("(B, N) with B = {}", indices.len()),
            format!("{s:?}"),
        ));
    }
    let n = s[1];
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(shape_err("gather_rows", format!("indices < {n}"), format!("index {bad}")));
    }
    let xd = x.data();
    let data: Vec<f64> = indices.iter().enumerate().map(|(b, &i)| xd[b * n + i]).collect();
    drop(xd);
    let px = x.clone();
    let idx = indices.to_vec();
    Ok(Tensor::from_op(
        vec![indices.len()],
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            px.accumulate_grad(idx.iter().enumerate().map(|(b, &i)| (b * n + i, g[b])));
        }),
    ))
}

/// Token lookup: (V, D) table gathered into (B, L, D). Rows with an id in
/// `frozen_id` receive no gradient, which keeps the PAD row pinned at zero.
pub fn embedding_lookup(table: &Tensor, ids: &[Vec<u32>], frozen_id: Option<u32>) -> Result<Tensor> {
    let s = table.shape();
    if s.len() != 2 {
        return Err(shape_err("embedding_lookup", "(V, D)".into(), format!("{s:?}")));
    }
    let (v, d) = (s[0], s[1]);
    let batch = ids.len();
    let l = ids.first().map(|r| r.len()).unwrap_or(0);
    for row in ids {
        if row.len() != l {
            return Err(shape_err("embedding_lookup", format!("uniform length {l}"), format!("length {}", row.len())));
        }
        if let Some(&bad) = row.iter().find(|&&id| id as usize >= v) {
            return Err(NeuralError::Corrupt(format!(
                "token id {bad} outside vocabulary of size {v}"
            )));
        }
    }
    let td = table.data();
    let mut data = vec![0.0; batch * l * d];
    for (b, row) in ids.iter().enumerate() {
        for (t, &id) in row.iter().enumerate() {
            let src = &td[id as usize * d..(id as usize + 1) * d];
            data[(b * l + t) * d..(b * l + t + 1) * d].copy_from_slice(src);
        }
    }
    drop(td);
    let ptable = table.clone();
    let ids_owned: Vec<Vec<u32>> = ids.to_vec();
    Ok(Tensor::from_op(
        vec![batch, l, d],
        data,
        vec![table.clone()],
        Box::new(move |out| {
            let g = out.grad();
            ptable.accumulate_grad(ids_owned.iter().enumerate().flat_map(|(b, row)| {
                let g = &g;
                row.iter().enumerate().flat_map(move |(t, &id)| {
                    let frozen = frozen_id == Some(id);
                    (0..d).filter_map(move |j| {
                        if frozen {
                            None
                        } else {
                            Some((id as usize * d + j, g[(b * l + t) * d + j]))
                        }
                    })
                })
            }));
        }),
    ))
}

/// 1-D convolution over time: (B, L, D) input with (F, W, D) filters and
/// (F) bias gives (B, L - W + 1, F).
pub fn conv1d(x: &Tensor, filters: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (xs, fs, bs) = (x.shape(), filters.shape(), bias.shape());
    if xs.len() != 3 || fs.len() != 3 || bs.len() != 1 || xs[2] != fs[2] || fs[0] != bs[0] {
        return Err(shape_err(
            "conv1d",
            "(B, L, D) * (F, W, D) + (F)".into(),
            format!("{xs:?} * {fs:?} + {bs:?}"),
        ));
    }
    let (batch, l, d) = (xs[0], xs[1], xs[2]);
    let (f, w) = (fs[0], fs[1]);
    if l < w {
        return Err(shape_err("conv1d", format!("L >= {w}"), format!("L = {l}")));
    }
    let t_out = l - w + 1;
    let xd = x.data();
    let fd = filters.data();
    let bd = bias.data();
    let mut data = vec![0.0; batch * t_out * f];
    for b in 0..batch {
        for t in 0..t_out {
            let window = &xd[(b * l + t) * d..(b * l + t + w) * d];
            for fi in 0..f {
                let filt = &fd[fi * w * d..(fi + 1) * w * d];
                let mut acc = bd[fi];
                for (xv, fv) in window.iter().zip(filt.iter()) {
                    acc += xv * fv;
                }
                data[(b * t_out + t) * f + fi] = acc;
            }
        }
    }
    drop(xd);
    drop(fd);
    drop(bd);
    let (px, pf, pb) = (x.clone(), filters.clone(), bias.clone());
    Ok(Tensor::from_op(
        vec![batch, t_out, f],
        data,
        vec![x.clone(), filters.clone(), bias.clone()],
        Box::new(move |out| {
            let g = out.grad();
            if px.requires_grad() {
                let fd = pf.data();
                let mut gx = vec![0.0; batch * l * d];
                for b in 0..batch {
                    for t in 0..t_out {
                        for fi in 0..f {
                            let gv = g[(b * t_out + t) * f + fi];
                            if gv == 0.0 {
                                continue;
                            }
                            let filt = &fd[fi * w * d..(fi + 1) * w * d];
                            let dst = &mut gx[(b * l + t) * d..(b * l + t + w) * d];
                            for (dv, fv) in dst.iter_mut().zip(filt.iter()) {
                                *dv += gv * fv;
                            }
                        }
                    }
                }
                px.accumulate_grad(gx.into_iter().enumerate());
            }
            if pf.requires_grad() {
                let xd = px.data();
                let mut gf = vec![0.0; f * w * d];
                for b in 0..batch {
                    for t in 0..t_out {
                        let window = &xd[(b * l + t) * d..(b * l + t + w) * d];
                        for fi in 0..f {
                            let gv = g[(b * t_out + t) * f + fi];
                            if gv == 0.0 {
                                continue;
                            }
                            let dst = &mut gf[fi * w * d..(fi + 1) * w * d];
                            for (dv, xv) in dst.iter_mut().zip(window.iter()) {
                                *dv += gv * xv;
                            }
                        }
                    }
                }
                pf.accumulate_grad(gf.into_iter().enumerate());
            }
            if pb.requires_grad() {
                let mut gb = vec![0.0; f];
                for b in 0..batch {
                    for t in 0..t_out {
                        for fi in 0..f {
                            gb[fi] += g[(b * t_out + t) * f + fi];
                        }
                    }
                }
                pb.accumulate_grad(gb.into_iter().enumerate());
            }
        }),
    ))
}

/// Max over the time axis of (B, T, F), restricted per sample to the first
/// `valid[b]` positions (always at least one). Gradient flows to the first
/// argmax position.
pub fn max_over_time(x: &Tensor, valid: &[usize]) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 || valid.len() != s[0] {
        return Err(shape_err(
            "max_over_time",
            format!("(B, T, F) with B = {}", valid.len()),
            format!("{s:?}"),
        ));
    }
    let (batch, t_len, f) = (s[0], s[1], s[2]);
    if let Some(&bad) = valid.iter().find(|&&v| v == 0 || v > t_len) {
        return Err(shape_err("max_over_time", format!("valid in 1..={t_len}"), format!("valid = {bad}")));
    }
    let xd = x.data();
    let mut data = vec![0.0; batch * f];
    let mut arg = vec![0usize; batch * f];
    for b in 0..batch {
        for fi in 0..f {
            let mut best = f64::NEG_INFINITY;
            let mut best_t = 0;
            for t in 0..valid[b] {
                let v = xd[(b * t_len + t) * f + fi];
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            data[b * f + fi] = best;
            arg[b * f + fi] = best_t;
        }
    }
    drop(xd);
    let px = x.clone();
    Ok(Tensor::from_op(
        vec![batch, f],
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            px.accumulate_grad((0..g.len()).map(|i| {
                let (b, fi) = (i / f, i % f);
                ((b * t_len + arg[i]) * f + fi, g[i])
            }));
        }),
    ))
}

/// 2-D convolution: (B, C, H, W) input, (O, C, KH, KW) filters, (O) bias,
/// square stride, valid padding.
pub fn conv2d(x: &Tensor, filters: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let (xs, fs, bs) = (x.shape(), filters.shape(), bias.shape());
    if xs.len() != 4 || fs.len() != 4 || bs.len() != 1 || xs[1] != fs[1] || fs[0] != bs[0] || stride == 0 {
        return Err(shape_err(
            "conv2d",
            "(B, C, H, W) * (O, C, KH, KW) + (O)".into(),
            format!("{xs:?} * {fs:?} + {bs:?} stride {stride}"),
        ));
    }
    let (batch, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (o, kh, kw) = (fs[0], fs[2], fs[3]);
    if h < kh || w < kw {
        return Err(shape_err("conv2d", format!("H >= {kh}, W >= {kw}"), format!("({h}, {w})")));
    }
    let oh = (h - kh) / stride + 1;
    let ow = (w - kw) / stride + 1;
    let xd = x.data();
    let fd = filters.data();
    let bd = bias.data();
    let mut data = vec![0.0; batch * o * oh * ow];
    for b in 0..batch {
        for oi in 0..o {
            for yy in 0..oh {
                for xx in 0..ow {
                    let mut acc = bd[oi];
                    for ci in 0..c {
                        for dy in 0..kh {
                            let src_row = (b * c + ci) * h * w + (yy * stride + dy) * w + xx * stride;
                            let fil_row = (oi * c + ci) * kh * kw + dy * kw;
                            for dx in 0..kw {
                                acc += xd[src_row + dx] * fd[fil_row + dx];
                            }
                        }
                    }
                    data[((b * o + oi) * oh + yy) * ow + xx] = acc;
                }
            }
        }
    }
    drop(xd);
    drop(fd);
    drop(bd);
    let (px, pf, pb) = (x.clone(), filters.clone(), bias.clone());
    Ok(Tensor::from_op(
        vec![batch, o, oh, ow],
        data,
        vec![x.clone(), filters.clone(), bias.clone()],
        Box::new(move |out| {
            let g = out.grad();
            if px.requires_grad() {
                let fd = pf.data();
                let mut gx = vec![0.0; batch * c * h * w];
                for b in 0..batch {
                    for oi in 0..o {
                        for yy in 0..oh {
                            for xx in 0..ow {
                                let gv = g[((b * o + oi) * oh + yy) * ow + xx];
                                if gv == 0.0 {
                                    continue;
                                }
                                for ci in 0..c {
                                    for dy in 0..kh {
                                        let dst_row = (b * c + ci) * h * w + (yy * stride + dy) * w + xx * stride;
                                        let fil_row = (oi * c + ci) * kh * kw + dy * kw;
                                        for dx in 0..kw {
                                            gx[dst_row + dx] += gv * fd[fil_row + dx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                px.accumulate_grad(gx.into_iter().enumerate());
            }
            if pf.requires_grad() {
                let xd = px.data();
                let mut gf = vec![0.0; o * c * kh * kw];
                for b in 0..batch {
                    for oi in 0..o {
                        for yy in 0..oh {
                            for xx in 0..ow {
                                let gv = g[((b * o + oi) * oh + yy) * ow + xx];
                                if gv == 0.0 {
                                    continue;
                                }
                                for ci in 0..c {
                                    for dy in 0..kh {
                                        let src_row = (b * c + ci) * h * w + (yy * stride + dy) * w + xx * stride;
                                        let fil_row = (oi * c + ci) * kh * kw + dy * kw;
                                        for dx in 0..kw {
                                            gf[fil_row + dx] += gv * xd[src_row + dx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                pf.accumulate_grad(gf.into_iter().enumerate());
            }
            if pb.requires_grad() {
                let mut gb = vec![0.0; o];
                for (i, &gv) in g.iter().enumerate() {
                    gb[(i / (oh * ow)) % o] += gv;
                }
                pb.accumulate_grad(gb.into_iter().enumerate());
            }
        }),
    ))
}

/// View a (B, ...) tensor as (B, rest). Shares no storage tricks: plain copy.
pub fn flatten_rows(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.is_empty() {
        return Err(shape_err("flatten_rows", "rank >= 1".into(), "scalar".into()));
    }
    let rows = s[0];
    let rest: usize = s[1..].iter().product();
    let data = x.data().clone();
    let px = x.clone();
    Ok(Tensor::from_op(
        vec![rows, rest],
        data,
        vec![x.clone()],
        Box::new(move |out| {
            let g = out.grad();
            px.accumulate_grad(g.iter().copied().enumerate());
        }),
    ))
}

/// Concatenate (B, Ni) matrices along the column axis.
pub fn concat_cols(xs: &[Tensor]) -> Result<Tensor> {
    if xs.is_empty() {
        return Err(shape_err("concat_cols", "at least one input".into(), "none".into()));
    }
    let rows = xs[0].shape().first().copied().unwrap_or(0);
    let mut widths = Vec::with_capacity(xs.len());
    for x in xs {
        let s = x.shape();
        if s.len() != 2 || s[0] != rows {
            return Err(shape_err("concat_cols", format!("({rows}, Ni)"), format!("{s:?}")));
        }
        widths.push(s[1]);
    }
    let total: usize = widths.iter().sum();
    let mut data = vec![0.0; rows * total];
    let mut offset = 0;
    for (x, &wi) in xs.iter().zip(&widths) {
        let xd = x.data();
        for r in 0..rows {
            data[r * total + offset..r * total + offset + wi].copy_from_slice(&xd[r * wi..(r + 1) * wi]);
        }
        offset += wi;
    }
    let parents: Vec<Tensor> = xs.to_vec();
    let widths_c = widths.clone();
    let parents_c = parents.clone();
    Ok(Tensor::from_op(
        vec![rows, total],
        data,
        parents,
        Box::new(move |out| {
            let g = out.grad();
            let mut offset = 0;
            for (x, &wi) in parents_c.iter().zip(&widths_c) {
                if x.requires_grad() {
                    x.accumulate_grad((0..rows * wi).map(|i| {
                        let (r, j) = (i / wi, i % wi);
                        (i, g[r * total + offset + j])
                    }));
                }
                offset += wi;
            }
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn vec_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_abs_diff_eq!(x, y, epsilon = tol);
        }
    }

    #[test]
    fn relu_forward() {
        let x = Tensor::constant(&[3], vec![-1.0, 0.0, 2.0]);
        assert_eq!(*relu(&x).unwrap().data(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn add_shape_mismatch_is_error() {
        let a = Tensor::constant(&[2], vec![1.0, 2.0]);
        let b = Tensor::constant(&[3], vec![1.0, 2.0, 3.0]);
        let err = add(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn matmul_forward_and_grad() {
        // [[1,2],[3,4]] x [[5],[6]] = [[17],[39]]
        let a = Tensor::param("a", &[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::param("b", &[2, 1], vec![5.0, 6.0]);
        let y = matmul(&a, &b).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
        assert_eq!(*y.data(), vec![17.0, 39.0]);
        let loss = sum(&y).unwrap();
        loss.backward().unwrap();
        // dA = G x B^T with G = ones(2,1) -> rows [5,6]
        assert_eq!(*a.grad(), vec![5.0, 6.0, 5.0, 6.0]);
        // dB = A^T x G -> [1+3, 2+4]
        assert_eq!(*b.grad(), vec![4.0, 6.0]);
    }

    #[test]
    fn add_bias_broadcasts_rows() {
        let x = Tensor::param("x", &[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::param("b", &[2], vec![10.0, 20.0]);
        let y = add_bias(&x, &b).unwrap();
        assert_eq!(*y.data(), vec![11.0, 22.0, 13.0, 24.0]);
        sum(&y).unwrap().backward().unwrap();
        assert_eq!(*b.grad(), vec![2.0, 2.0]);
        assert_eq!(*x.grad(), vec![1.0; 4]);
    }

    #[test]
    fn mean_grad_is_uniform() {
        let x = Tensor::param("x", &[4], vec![1.0, 2.0, 3.0, 4.0]);
        let m = mean(&x).unwrap();
        assert_abs_diff_eq!(m.item(), 2.5);
        m.backward().unwrap();
        assert_eq!(*x.grad(), vec![0.25; 4]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::constant(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]);
        let y = softmax(&x).unwrap();
        let d = y.data();
        assert_abs_diff_eq!(d[0] + d[1] + d[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[3] + d[4] + d[5], 1.0, epsilon = 1e-12);
        assert!(d[2] > d[1] && d[1] > d[0]);
    }

    #[test]
    fn log_softmax_matches_softmax_log() {
        let x = Tensor::constant(&[1, 4], vec![0.5, -1.0, 2.0, 0.0]);
        let ls = log_softmax(&x).unwrap();
        let s = softmax(&x).unwrap();
        let (a, b) = (ls.data().clone(), s.data().clone());
        for (l, p) in a.iter().zip(&b) {
            assert_abs_diff_eq!(*l, p.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn log_softmax_grad_hand_checked() {
        // loss = -logp[target]; grad wrt logits = p - onehot(target)
        let x = Tensor::param("x", &[1, 3], vec![1.0, 0.0, -1.0]);
        let lp = log_softmax(&x).unwrap();
        let picked = gather_rows(&lp, &[0]).unwrap();
        let loss = scale(&sum(&picked).unwrap(), -1.0).unwrap();
        loss.backward().unwrap();
        let p = softmax(&Tensor::constant(&[1, 3], vec![1.0, 0.0, -1.0]))
            .unwrap()
            .data()
            .clone();
        let expect = vec![p[0] - 1.0, p[1], p[2]];
        vec_close(&x.grad(), &expect, 1e-12);
    }

    #[test]
    fn gather_rows_picks_and_routes_grad() {
        let x = Tensor::param("x", &[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = gather_rows(&x, &[2, 0]).unwrap();
        assert_eq!(*y.data(), vec![3.0, 4.0]);
        sum(&y).unwrap().backward().unwrap();
        assert_eq!(*x.grad(), vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!(gather_rows(&x, &[3, 0]).is_err());
    }

    #[test]
    fn clip_band_gradient() {
        let x = Tensor::param("x", &[3], vec![-2.0, 0.5, 3.0]);
        let y = clip(&x, 0.0, 1.0).unwrap();
        assert_eq!(*y.data(), vec![0.0, 0.5, 1.0]);
        sum(&y).unwrap().backward().unwrap();
        assert_eq!(*x.grad(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn min_elem_routes_grad_to_smaller() {
        let a = Tensor::param("a", &[2], vec![1.0, 5.0]);
        let b = Tensor::param("b", &[2], vec![3.0, 2.0]);
        let y = min_elem(&a, &b).unwrap();
        assert_eq!(*y.data(), vec![1.0, 2.0]);
        sum(&y).unwrap().backward().unwrap();
        assert_eq!(*a.grad(), vec![1.0, 0.0]);
        assert_eq!(*b.grad(), vec![0.0, 1.0]);
    }

    #[test]
    fn conv1d_single_channel_example() {
        // input [1,2,3], filter [1,1], no bias -> [3, 5]
        let x = Tensor::constant(&[1, 3, 1], vec![1.0, 2.0, 3.0]);
        let f = Tensor::constant(&[1, 2, 1], vec![1.0, 1.0]);
        let b = Tensor::constant(&[1], vec![0.0]);
        let y = conv1d(&x, &f, &b).unwrap();
        assert_eq!(y.shape(), &[1, 2, 1]);
        assert_eq!(*y.data(), vec![3.0, 5.0]);
    }

    #[test]
    fn conv1d_window_too_short_is_error() {
        let x = Tensor::constant(&[1, 2, 1], vec![1.0, 2.0]);
        let f = Tensor::constant(&[1, 3, 1], vec![1.0; 3]);
        let b = Tensor::constant(&[1], vec![0.0]);
        assert!(conv1d(&x, &f, &b).is_err());
    }

    fn conv2d_naive(
        x: &[f64],
        f: &[f64],
        bias: &[f64],
        (batch, c, h, w): (usize, usize, usize, usize),
        (o, kh, kw): (usize, usize, usize),
        stride: usize,
    ) -> Vec<f64> {
        let oh = (h - kh) / stride + 1;
        let ow = (w - kw) / stride + 1;
        let mut out = vec![0.0; batch * o * oh * ow];
        for b in 0..batch {
            for oi in 0..o {
                for yy in 0..oh {
                    for xx in 0..ow {
                        let mut acc = bias[oi];
                        for ci in 0..c {
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    acc += x[(b * c + ci) * h * w
                                        + (yy * stride + dy) * w
                                        + (xx * stride + dx)]
                                        * f[(oi * c + ci) * kh * kw + dy * kw + dx];
                                }
                            }
                        }
                        out[((b * o + oi) * oh + yy) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_matches_naive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (batch, c, h, w, o, kh, kw, stride) = (2, 3, 7, 9, 4, 3, 3, 2);
        let xd: Vec<f64> = (0..batch * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fd: Vec<f64> = (0..o * c * kh * kw).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bd: Vec<f64> = (0..o).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::constant(&[batch, c, h, w], xd.clone());
        let f = Tensor::constant(&[o, c, kh, kw], fd.clone());
        let b = Tensor::constant(&[o], bd.clone());
        let y = conv2d(&x, &f, &b, stride).unwrap();
        assert_eq!(y.shape(), &[batch, o, 3, 4]);
        let expect = conv2d_naive(&xd, &fd, &bd, (batch, c, h, w), (o, kh, kw), stride);
        vec_close(&y.data(), &expect, 1e-10);
    }

    #[test]
    fn max_over_time_respects_valid_length() {
        // (1, 3, 2); only the first 2 timesteps are valid
        let x = Tensor::param("x", &[1, 3, 2], vec![1.0, -1.0, 0.5, 4.0, 9.0, 9.0]);
        let y = max_over_time(&x, &[2]).unwrap();
        assert_eq!(*y.data(), vec![1.0, 4.0]);
        sum(&y).unwrap().backward().unwrap();
        assert_eq!(*x.grad(), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(max_over_time(&x, &[0]).is_err());
        assert!(max_over_time(&x, &[4]).is_err());
    }

    #[test]
    fn embedding_lookup_gathers_and_freezes_pad() {
        let table = Tensor::param("emb", &[4, 2], vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let ids = vec![vec![2u32, 0, 1]];
        let y = embedding_lookup(&table, &ids, Some(0)).unwrap();
        assert_eq!(y.shape(), &[1, 3, 2]);
        assert_eq!(*y.data(), vec![3.0, 4.0, 0.0, 0.0, 1.0, 2.0]);
        sum(&y).unwrap().backward().unwrap();
        // row 0 (PAD) stays zero-grad, rows 1 and 2 get ones
        assert_eq!(*table.grad(), vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        assert!(embedding_lookup(&table, &[vec![4]], None).is_err());
    }

    #[test]
    fn flatten_and_concat() {
        let x = Tensor::param("x", &[2, 2, 2], (0..8).map(|i| i as f64).collect());
        let flat = flatten_rows(&x).unwrap();
        assert_eq!(flat.shape(), &[2, 4]);
        let other = Tensor::param("o", &[2, 1], vec![100.0, 200.0]);
        let cat = concat_cols(&[flat, other.clone()]).unwrap();
        assert_eq!(cat.shape(), &[2, 5]);
        assert_eq!(*cat.data(), vec![0.0, 1.0, 2.0, 3.0, 100.0, 4.0, 5.0, 6.0, 7.0, 200.0]);
        sum(&cat).unwrap().backward().unwrap();
        assert_eq!(*x.grad(), vec![1.0; 8]);
        assert_eq!(*other.grad(), vec![1.0, 1.0]);
    }

    #[test]
    fn exp_and_scale_chain() {
        // d/dx 2*exp(x) = 2*exp(x)
        let x = Tensor::param("x", &[1], vec![0.3]);
        let y = scale(&exp(&x).unwrap(), 2.0).unwrap();
        sum(&y).unwrap().backward().unwrap();
        assert_abs_diff_eq!(x.grad()[0], 2.0 * 0.3f64.exp(), epsilon = 1e-12);
    }
}
