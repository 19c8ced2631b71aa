use super::{gemm, numel, Elem, Tensor, View};
use crate::error::{Error, Result};

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Dimension {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// `(outer, axis extent, inner)` decomposition of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

/// Stable in-place softmax; `-inf` entries come out as exact zeros.
pub(crate) fn softmax_slice<E: Elem>(row: &mut [E]) {
    let max = row.iter().copied().fold(E::neg_infinity(), E::max);
    let mut sum = E::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    let inv = E::one() / sum;
    row.iter_mut().for_each(|v| *v = *v * inv);
}

fn log_sum_exp<E: Elem>(row: &[E]) -> E {
    let max = row.iter().copied().fold(E::neg_infinity(), E::max);
    let sum: E = row.iter().map(|&v| (v - max).exp()).sum();
    sum.ln() + max
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

impl<E: Elem> Tensor<E> {
    /// `[m×k]·[k×n] -> [m×n]`.
    pub fn matmul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(dim_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![E::zero(); m * n];
        gemm(m, k, n, self.data(), View::rows(0, k), other.data(), View::rows(0, n), &mut out, View::rows(0, n), false);
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(out, vec![m, n], &[self, other], move |_, g| {
            let da = a.requires_grad().then(|| {
                let mut da = vec![E::zero(); m * k];
                gemm(m, n, k, g, View::rows(0, n), b.data(), View::cols(0, n), &mut da, View::rows(0, k), false);
                da
            });
            let db = b.requires_grad().then(|| {
                let mut db = vec![E::zero(); k * n];
                gemm(k, m, n, a.data(), View::cols(0, k), g, View::rows(0, n), &mut db, View::rows(0, n), false);
                db
            });
            vec![da, db]
        }))
    }

    /// Affine map over the last axis: `x·Wᵀ + b` with `W: [out×in]`.
    pub fn linear(&self, weight: &Tensor<E>, bias: Option<&Tensor<E>>) -> Result<Tensor<E>> {
        let sx = self.shape();
        let sw = weight.shape();
        if sx.is_empty() || sw.len() != 2 || sw[1] != sx[sx.len() - 1] {
            return Err(dim_err("linear", sx, sw));
        }
        let (fan_out, fan_in) = (sw[0], sw[1]);
        if let Some(b) = bias {
            if b.shape() != [fan_out] {
                return Err(dim_err("linear bias", b.shape(), &[fan_out]));
            }
        }
        let rows = self.numel() / fan_in;
        let mut out = vec![E::zero(); rows * fan_out];
        gemm(rows, fan_in, fan_out, self.data(), View::rows(0, fan_in), weight.data(), View::cols(0, fan_in), &mut out, View::rows(0, fan_out), false);
        if let Some(b) = bias {
            for row in out.chunks_exact_mut(fan_out) {
                row.iter_mut().zip(b.data()).for_each(|(o, &bv)| *o = *o + bv);
            }
        }
        let mut shape = sx.to_vec();
        *shape.last_mut().unwrap() = fan_out;
        let (x, w) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            parents.push(b);
        }
        let bias_grad = bias.map(|b| b.requires_grad()).unwrap_or(false);
        Ok(Tensor::from_op(out, shape, &parents, move |_, g| {
            let dx = x.requires_grad().then(|| {
                let mut dx = vec![E::zero(); rows * fan_in];
                gemm(rows, fan_out, fan_in, g, View::rows(0, fan_out), w.data(), View::rows(0, fan_in), &mut dx, View::rows(0, fan_in), false);
                dx
            });
            let dw = w.requires_grad().then(|| {
                let mut dw = vec![E::zero(); fan_out * fan_in];
                gemm(fan_out, rows, fan_in, g, View::cols(0, fan_out), x.data(), View::rows(0, fan_in), &mut dw, View::rows(0, fan_in), false);
                dw
            });
            let mut grads = vec![dx, dw];
            if has_bias {
                grads.push(bias_grad.then(|| {
                    let mut db = vec![E::zero(); fan_out];
                    for row in g.chunks_exact(fan_out) {
                        db.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
                    }
                    db
                }));
            }
            grads
        }))
    }

    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        if self.shape() != other.shape() {
            return Err(dim_err("add", self.shape(), other.shape()));
        }
        let out = self.data().iter().zip(other.data()).map(|(&a, &b)| a + b).collect();
        let (ra, rb) = (self.requires_grad(), other.requires_grad());
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self, other], move |_, g| {
            vec![ra.then(|| g.to_vec()), rb.then(|| g.to_vec())]
        }))
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.add(&other.mul_scalar(-1.0))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        if self.shape() != other.shape() {
            return Err(dim_err("mul", self.shape(), other.shape()));
        }
        let out = self.data().iter().zip(other.data()).map(|(&a, &b)| a * b).collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self, other], move |_, g| {
            let da = a.requires_grad().then(|| g.iter().zip(b.data()).map(|(&g, &b)| g * b).collect());
            let db = b.requires_grad().then(|| g.iter().zip(a.data()).map(|(&g, &a)| g * a).collect());
            vec![da, db]
        }))
    }

    pub fn mul_scalar(&self, s: f64) -> Tensor<E> {
        let s = E::lit(s);
        let out = self.data().iter().map(|&v| v * s).collect();
        Tensor::from_op(out, self.shape().to_vec(), &[self], move |_, g| {
            vec![Some(g.iter().map(|&v| v * s).collect())]
        })
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Tensor<E> {
        let total: E = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(vec![total], vec![], &[self], move |_, g| vec![Some(vec![g[0]; n])])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Tensor<E> {
        let (c, k, half) = (E::lit(GELU_C), E::lit(GELU_K), E::lit(0.5));
        let three = E::lit(3.0);
        let out = self
            .data()
            .iter()
            .map(|&x| half * x * (E::one() + (c * (x + k * x * x * x)).tanh()))
            .collect();
        let x = self.clone();
        Tensor::from_op(out, self.shape().to_vec(), &[self], move |_, g| {
            let dx = x
                .data()
                .iter()
                .zip(g)
                .map(|(&x, &g)| {
                    let t = (c * (x + k * x * x * x)).tanh();
                    let dt = (E::one() - t * t) * c * (E::one() + three * k * x * x);
                    g * (half * (E::one() + t) + half * x * dt)
                })
                .collect();
            vec![Some(dx)]
        })
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<E>> {
        if axis >= self.rank() {
            return Err(Error::Index { index: axis, extent: self.rank() });
        }
        let (outer, n, inner) = split_axis(self.shape(), axis);
        let mut out = self.data().to_vec();
        let mut buf = vec![E::zero(); n];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for j in 0..n {
                    buf[j] = out[base + j * inner];
                }
                softmax_slice(&mut buf);
                for j in 0..n {
                    out[base + j * inner] = buf[j];
                }
            }
        }
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self], move |y, g| {
            let mut dx = vec![E::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    let dot: E = (0..n).map(|j| y[base + j * inner] * g[base + j * inner]).sum();
                    for j in 0..n {
                        let idx = base + j * inner;
                        dx[idx] = y[idx] * (g[idx] - dot);
                    }
                }
            }
            vec![Some(dx)]
        }))
    }

    /// Normalizes over the last axis, then applies `gamma`/`beta`.
    pub fn layer_norm(&self, gamma: &Tensor<E>, beta: &Tensor<E>, eps: f64) -> Result<Tensor<E>> {
        let d = *self.shape().last().ok_or_else(|| Error::Shape("layer_norm on scalar".into()))?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(dim_err("layer_norm", self.shape(), gamma.shape()));
        }
        let eps = E::lit(eps);
        let dn = E::lit(d as f64);
        let rows = self.numel() / d;
        let mut xhat = vec![E::zero(); self.numel()];
        let mut rstd = vec![E::zero(); rows];
        let mut out = vec![E::zero(); self.numel()];
        for r in 0..rows {
            let x = &self.data()[r * d..(r + 1) * d];
            let mean = x.iter().copied().sum::<E>() / dn;
            let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<E>() / dn;
            let rs = E::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = (x[j] - mean) * rs;
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * gamma.data()[j] + beta.data()[j];
            }
        }
        let (x, gm, bt) = (self.clone(), gamma.clone(), beta.clone());
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self, gamma, beta], move |_, g| {
            let dx = x.requires_grad().then(|| {
                let mut dx = vec![E::zero(); rows * d];
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let xh = &xhat[r * d..(r + 1) * d];
                    let mut sum_dy = E::zero();
                    let mut sum_dy_xh = E::zero();
                    for j in 0..d {
                        let dy = gr[j] * gm.data()[j];
                        sum_dy = sum_dy + dy;
                        sum_dy_xh = sum_dy_xh + dy * xh[j];
                    }
                    for j in 0..d {
                        let dy = gr[j] * gm.data()[j];
                        dx[r * d + j] = rstd[r] * (dy - sum_dy / dn - xh[j] * sum_dy_xh / dn);
                    }
                }
                dx
            });
            let dgamma = gm.requires_grad().then(|| {
                let mut dg = vec![E::zero(); d];
                for r in 0..rows {
                    for j in 0..d {
                        dg[j] = dg[j] + g[r * d + j] * xhat[r * d + j];
                    }
                }
                dg
            });
            let dbeta = bt.requires_grad().then(|| {
                let mut db = vec![E::zero(); d];
                for row in g.chunks_exact(d) {
                    db.iter_mut().zip(row).for_each(|(a, &b)| *a = *a + b);
                }
                db
            });
            vec![dx, dgamma, dbeta]
        }))
    }

    /// Arithmetic mean along `axis`; the axis is removed from the shape.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<E>> {
        if axis >= self.rank() {
            return Err(Error::Index { index: axis, extent: self.rank() });
        }
        let (outer, n, inner) = split_axis(self.shape(), axis);
        if n == 0 {
            return Err(Error::Shape("mean over an empty axis".into()));
        }
        let inv = E::one() / E::lit(n as f64);
        let mut out = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let src = &self.data()[(o * n + j) * inner..(o * n + j + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
            }
        }
        out.iter_mut().for_each(|v| *v = *v * inv);
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        let total = self.numel();
        Ok(Tensor::from_op(out, shape, &[self], move |_, g| {
            let mut dx = vec![E::zero(); total];
            for o in 0..outer {
                for j in 0..n {
                    let dst = &mut dx[(o * n + j) * inner..(o * n + j + 1) * inner];
                    let src = &g[o * inner..(o + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s * inv);
                }
            }
            vec![Some(dx)]
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<E>> {
        if numel(shape) != self.numel() {
            return Err(dim_err("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(self.data().to_vec(), shape.to_vec(), &[self], |_, g| vec![Some(g.to_vec())]))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor<E>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("transpose needs rank 2, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let src = self.data();
        let mut out = vec![E::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Ok(Tensor::from_op(out, vec![c, r], &[self], move |_, g| {
            let mut dx = vec![E::zero(); r * c];
            for i in 0..r {
                for j in 0..c {
                    dx[i * c + j] = g[j * r + i];
                }
            }
            vec![Some(dx)]
        }))
    }

    /// Rows `start..start+len` along the first axis.
    pub fn narrow(&self, start: usize, len: usize) -> Result<Tensor<E>> {
        let s = self.shape();
        if s.is_empty() || start + len > s[0] {
            return Err(Error::Index { index: start + len, extent: s.first().copied().unwrap_or(0) });
        }
        let row = self.numel() / s[0].max(1);
        let out = self.data()[start * row..(start + len) * row].to_vec();
        let mut shape = s.to_vec();
        shape[0] = len;
        let total = self.numel();
        Ok(Tensor::from_op(out, shape, &[self], move |_, g| {
            let mut dx = vec![E::zero(); total];
            dx[start * row..(start + len) * row].copy_from_slice(g);
            vec![Some(dx)]
        }))
    }

    /// Gathers rows of `table: [V×d]` by id.
    pub fn embedding(table: &Tensor<E>, ids: &[usize]) -> Result<Tensor<E>> {
        let s = table.shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("embedding table must be rank 2, got {s:?}")));
        }
        let (v, d) = (s[0], s[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Index { index: id, extent: v });
            }
            out.extend_from_slice(&table.data()[id * d..(id + 1) * d]);
        }
        let ids = ids.to_vec();
        Ok(Tensor::from_op(out, vec![ids.len(), d], &[table], move |_, g| {
            let mut dt = vec![E::zero(); v * d];
            for (r, &id) in ids.iter().enumerate() {
                let dst = &mut dt[id * d..(id + 1) * d];
                dst.iter_mut().zip(&g[r * d..(r + 1) * d]).for_each(|(a, &b)| *a = *a + b);
            }
            vec![Some(dt)]
        }))
    }

    /// Concatenates along the first (sequence) axis.
    pub fn concat(parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let tail = &first.shape()[1..];
        let mut rows = 0;
        for p in parts {
            if p.rank() == 0 || &p.shape()[1..] != tail {
                return Err(dim_err("concat", first.shape(), p.shape()));
            }
            rows += p.shape()[0];
        }
        let mut out = Vec::with_capacity(parts.iter().map(|p| p.numel()).sum());
        for p in parts {
            out.extend_from_slice(p.data());
        }
        let mut shape = first.shape().to_vec();
        shape[0] = rows;
        let sizes: Vec<(usize, bool)> = parts.iter().map(|p| (p.numel(), p.requires_grad())).collect();
        Ok(Tensor::from_op(out, shape, parts, move |_, g| {
            let mut off = 0;
            sizes
                .iter()
                .map(|&(n, req)| {
                    let slice = req.then(|| g[off..off + n].to_vec());
                    off += n;
                    slice
                })
                .collect()
        }))
    }

    /// `-log softmax(logits)[target]` for a single logit vector.
    pub fn cross_entropy(&self, target: usize) -> Result<Tensor<E>> {
        let v = self.numel();
        if self.shape().iter().filter(|&&e| e != 1).count() > 1 {
            return Err(Error::Shape(format!("cross_entropy expects a vector, got {:?}", self.shape())));
        }
        let mut rows = self.reshape(&[1, v])?.cross_entropy_rows(&[0], &[target])?;
        rows = rows.reshape(&[])?;
        Ok(rows)
    }

    /// Mean cross-entropy of `logits[T×V]` over the `(row, target)` pairs.
    pub fn cross_entropy_rows(&self, rows: &[usize], targets: &[usize]) -> Result<Tensor<E>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("cross_entropy_rows expects [T, V], got {s:?}")));
        }
        if rows.len() != targets.len() || rows.is_empty() {
            return Err(Error::Contract("cross_entropy_rows needs equal, nonempty row/target lists".into()));
        }
        let (t, v) = (s[0], s[1]);
        for (&r, &tg) in rows.iter().zip(targets) {
            if r >= t {
                return Err(Error::Index { index: r, extent: t });
            }
            if tg >= v {
                return Err(Error::Index { index: tg, extent: v });
            }
        }
        let count = E::lit(rows.len() as f64);
        let mut total = E::zero();
        for (&r, &tg) in rows.iter().zip(targets) {
            let row = &self.data()[r * v..(r + 1) * v];
            total = total + (log_sum_exp(row) - row[tg]);
        }
        let x = self.clone();
        let (rows, targets) = (rows.to_vec(), targets.to_vec());
        Ok(Tensor::from_op(vec![total / count], vec![], &[self], move |_, g| {
            let scale = g[0] / count;
            let mut dx = vec![E::zero(); t * v];
            for (&r, &tg) in rows.iter().zip(&targets) {
                let mut p = x.data()[r * v..(r + 1) * v].to_vec();
                softmax_slice(&mut p);
                p[tg] = p[tg] - E::one();
                let dst = &mut dx[r * v..(r + 1) * v];
                dst.iter_mut().zip(&p).for_each(|(d, &pv)| *d = *d + pv * scale);
            }
            vec![Some(dx)]
        }))
    }

    /// Multi-head scaled dot-product attention.
    ///
    /// `q: [T×D]`, `k, v: [S×D]`, heads split `D` evenly. With `causal`,
    /// query `i` sees keys `j ≤ i + (S − T)`, so a cached prefix of `S − T`
    /// keys stays visible to every new query.
    pub fn attention(q: &Tensor<E>, k: &Tensor<E>, v: &Tensor<E>, heads: usize, causal: bool) -> Result<Tensor<E>> {
        let (t, s, d) = attention_dims(q, k, v, heads, causal)?;
        let dh = d / heads;
        let probs = attention_probs_raw(q.data(), k.data(), t, s, d, heads, causal);
        let mut out = vec![E::zero(); t * d];
        for h in 0..heads {
            gemm(t, s, dh, &probs, View::rows(h * t * s, s), v.data(), View::rows(h * dh, d), &mut out, View::rows(h * dh, d), false);
        }
        let (qc, kc, vc) = (q.clone(), k.clone(), v.clone());
        let scale = E::one() / E::lit(dh as f64).sqrt();
        Ok(Tensor::from_op(out, vec![t, d], &[q, k, v], move |_, g| {
            let mut dq = vec![E::zero(); t * d];
            let mut dk = vec![E::zero(); s * d];
            let mut dv = vec![E::zero(); s * d];
            let mut ds = vec![E::zero(); t * s];
            for h in 0..heads {
                let p = &probs[h * t * s..(h + 1) * t * s];
                // dV_h = Pᵀ·dO_h
                gemm(s, t, dh, p, View::cols(0, s), g, View::rows(h * dh, d), &mut dv, View::rows(h * dh, d), false);
                // dP = dO_h·V_hᵀ
                gemm(t, dh, s, g, View::rows(h * dh, d), vc.data(), View::cols(h * dh, d), &mut ds, View::rows(0, s), false);
                for i in 0..t {
                    let pr = &p[i * s..(i + 1) * s];
                    let dr = &mut ds[i * s..(i + 1) * s];
                    let dot: E = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                    for j in 0..s {
                        dr[j] = pr[j] * (dr[j] - dot) * scale;
                    }
                }
                gemm(t, s, dh, &ds, View::rows(0, s), kc.data(), View::rows(h * dh, d), &mut dq, View::rows(h * dh, d), false);
                gemm(s, t, dh, &ds, View::cols(0, s), qc.data(), View::rows(h * dh, d), &mut dk, View::rows(h * dh, d), false);
            }
            vec![
                qc.requires_grad().then_some(dq),
                kc.requires_grad().then_some(dk),
                vc.requires_grad().then_some(dv),
            ]
        }))
    }

    /// Attention weights `[heads×T×S]` as used by [`Tensor::attention`]; not recorded.
    pub fn attention_probs(q: &Tensor<E>, k: &Tensor<E>, heads: usize, causal: bool) -> Result<Tensor<E>> {
        let (t, s, d) = attention_dims(q, k, k, heads, causal)?;
        let probs = attention_probs_raw(q.data(), k.data(), t, s, d, heads, causal);
        Tensor::new(probs, &[heads, t, s])
    }
}

fn attention_dims<E: Elem>(q: &Tensor<E>, k: &Tensor<E>, v: &Tensor<E>, heads: usize, causal: bool) -> Result<(usize, usize, usize)> {
    let (sq, sk, sv) = (q.shape(), k.shape(), v.shape());
    if sq.len() != 2 || sk.len() != 2 || sk != sv || sq[1] != sk[1] {
        return Err(dim_err("attention", sq, sk));
    }
    let (t, s, d) = (sq[0], sk[0], sq[1]);
    if s == 0 {
        return Err(Error::Shape("attention over an empty key sequence".into()));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!("width {d} not divisible into {heads} heads")));
    }
    if causal && t > s {
        return Err(dim_err("causal attention (queries exceed keys)", sq, sk));
    }
    Ok((t, s, d))
}

fn attention_probs_raw<E: Elem>(q: &[E], k: &[E], t: usize, s: usize, d: usize, heads: usize, causal: bool) -> Vec<E> {
    let dh = d / heads;
    let scale = E::one() / E::lit(dh as f64).sqrt();
    let offset = s - t.min(s);
    let mut probs = vec![E::zero(); heads * t * s];
    for h in 0..heads {
        let base = h * t * s;
        gemm(t, dh, s, q, View::rows(h * dh, d), k, View::cols(h * dh, d), &mut probs, View::rows(base, s), false);
        for i in 0..t {
            let row = &mut probs[base + i * s..base + (i + 1) * s];
            row.iter_mut().for_each(|v| *v = *v * scale);
            if causal {
                row.iter_mut().skip(i + offset + 1).for_each(|v| *v = E::neg_infinity());
            }
            softmax_slice(row);
        }
    }
    probs
}
