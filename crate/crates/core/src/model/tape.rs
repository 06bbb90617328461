//! Reverse-mode differentiation over the handful of operations the
//! transformer needs. Every node holds a row-major matrix; sequences of a
//! batch are packed along the rows and attention works per segment.

use rand::Rng;

use super::params::{Gradients, ParamId, Params};
use super::scalar::Scalar;
use super::tensor::{gelu, gelu_grad, gemm, layer_norm, softmax_in_place, Matrix, View};

pub type NodeId = usize;

/// Attention block between query rows `q_start..q_start + q_len` and key
/// rows `k_start..k_start + k_len` of the packed inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
}

enum Op<T> {
    Input,
    Embed {
        ids: Vec<u32>,
        positions: Vec<usize>,
        tokens: ParamId,
        table: ParamId,
    },
    Linear {
        x: NodeId,
        w: ParamId,
        b: ParamId,
    },
    LayerNorm {
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        means: Vec<T>,
        rstds: Vec<T>,
    },
    Gelu {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Dropout {
        x: NodeId,
        keep: Vec<T>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        segments: Vec<Segment>,
        probs: Vec<Vec<T>>,
    },
    TiedLoss {
        x: NodeId,
        tokens: ParamId,
        targets: Vec<u32>,
        scale: T,
        probs: Matrix<T>,
    },
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Records a forward computation against borrowed parameters.
pub struct Tape<'p, T> {
    params: &'p Params<T>,
    nodes: Vec<Node<T>>,
}

/// Per-row output of the tied-embedding loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRows<T> {
    pub nll: Vec<T>,
    pub argmax: Vec<u32>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p Params<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p Params<T> {
        self.params
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    /// A constant input that receives no gradient.
    pub fn input(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Token embedding plus positional embedding, one row per id.
    pub fn embed(&mut self, ids: &[u32], positions: &[usize], tokens: ParamId, table: ParamId) -> NodeId {
        assert_eq!(ids.len(), positions.len());
        let e = self.params.get(tokens);
        let p = self.params.get(table);
        let mut out = Matrix::zeros(ids.len(), e.cols);
        for (r, (&id, &pos)) in ids.iter().zip(positions).enumerate() {
            for ((o, &a), &b) in out.row_mut(r).iter_mut().zip(e.row(id as usize)).zip(p.row(pos)) {
                *o = a + b;
            }
        }
        self.push(
            out,
            Op::Embed {
                ids: ids.to_vec(),
                positions: positions.to_vec(),
                tokens,
                table,
            },
        )
    }

    pub fn linear(&mut self, x: NodeId, w: ParamId, b: ParamId) -> NodeId {
        let out = super::tensor::linear(&self.nodes[x].value, self.params.get(w), self.params.get(b));
        self.push(out, Op::Linear { x, w, b })
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: ParamId, beta: ParamId) -> NodeId {
        let (out, means, rstds) = layer_norm(
            &self.nodes[x].value,
            &self.params.get(gamma).data,
            &self.params.get(beta).data,
        );
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                means,
                rstds,
            },
        )
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let src = &self.nodes[x].value;
        let out = Matrix::from_vec(src.rows, src.cols, src.data.iter().map(|&v| gelu(v)).collect());
        self.push(out, Op::Gelu { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.nodes[a].value.clone();
        out.add_assign(&self.nodes[b].value);
        self.push(out, Op::Add { a, b })
    }

    /// Inverted dropout; the identity when `rng` is `None` or `rate` is 0.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, rate: f64, rng: Option<&mut R>) -> NodeId {
        let Some(rng) = rng.filter(|_| rate > 0.0) else {
            return x;
        };
        let scale = T::of(1.0 / (1.0 - rate));
        let src = &self.nodes[x].value;
        let keep: Vec<T> = (0..src.data.len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { scale })
            .collect();
        let data = src.data.iter().zip(&keep).map(|(&v, &k)| v * k).collect();
        let out = Matrix::from_vec(src.rows, src.cols, data);
        self.push(out, Op::Dropout { x, keep })
    }

    /// Scaled dot-product attention with `heads` heads. When `causal` is set
    /// query row i of a segment sees key rows 0..=i only; keys with
    /// `key_valid[row] == false` are never attended.
    #[allow(clippy::too_many_arguments)]
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        segments: &[Segment],
        causal: bool,
        key_valid: Option<&[bool]>,
    ) -> NodeId {
        let (qm, km, vm) = (&self.nodes[q].value, &self.nodes[k].value, &self.nodes[v].value);
        let d = qm.cols;
        let hd = d / heads;
        let inv = T::one() / T::of(hd as f64).sqrt();
        let mut out = Matrix::zeros(qm.rows, d);
        let mut probs = Vec::with_capacity(segments.len() * heads);
        for s in segments {
            for h in 0..heads {
                let off_q = s.q_start * d + h * hd;
                let off_k = s.k_start * d + h * hd;
                let mut p = vec![T::zero(); s.q_len * s.k_len];
                gemm(
                    s.q_len,
                    hd,
                    s.k_len,
                    View::rows(&qm.data[off_q..], d),
                    View::transposed(&km.data[off_k..], d),
                    T::zero(),
                    &mut p,
                    s.k_len,
                );
                for i in 0..s.q_len {
                    let row = &mut p[i * s.k_len..(i + 1) * s.k_len];
                    for (j, x) in row.iter_mut().enumerate() {
                        let masked = (causal && j > i) || key_valid.is_some_and(|kv| !kv[s.k_start + j]);
                        *x = if masked { T::neg_infinity() } else { *x * inv };
                    }
                    softmax_in_place(row);
                }
                gemm(
                    s.q_len,
                    s.k_len,
                    hd,
                    View::rows(&p, s.k_len),
                    View::rows(&vm.data[off_k..], d),
                    T::zero(),
                    &mut out.data[off_q..],
                    d,
                );
                probs.push(p);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments: segments.to_vec(),
                probs,
            },
        )
    }

    /// `scale · Σ -log softmax(x · Eᵀ)[target]` with `E` the token embedding.
    /// Returns the scalar loss node and per-row diagnostics.
    pub fn tied_loss(&mut self, x: NodeId, tokens: ParamId, targets: &[u32], scale: T) -> (NodeId, LossRows<T>) {
        let xm = &self.nodes[x].value;
        assert_eq!(xm.rows, targets.len());
        let e = self.params.get(tokens);
        let vocab = e.rows;
        let mut probs = Matrix::zeros(xm.rows, vocab);
        gemm(
            xm.rows,
            xm.cols,
            vocab,
            View::rows(&xm.data, xm.cols),
            View::transposed(&e.data, e.cols),
            T::zero(),
            &mut probs.data,
            vocab,
        );
        let mut rows = LossRows {
            nll: Vec::with_capacity(xm.rows),
            argmax: Vec::with_capacity(xm.rows),
        };
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = probs.row_mut(r);
            let (best, &max) = row
                .iter()
                .enumerate()
                .fold((0, &T::neg_infinity()), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            let nll = lse - row[t as usize];
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
            total += nll;
            rows.nll.push(nll);
            rows.argmax.push(best as u32);
        }
        let loss = Matrix::from_vec(1, 1, vec![total * scale]);
        let id = self.push(
            loss,
            Op::TiedLoss {
                x,
                tokens,
                targets: targets.to_vec(),
                scale,
                probs,
            },
        );
        (id, rows)
    }

    /// Backpropagates from the scalar node `loss`, adding parameter
    /// gradients into `grads`.
    pub fn backward(self, loss: NodeId, grads: &mut Gradients<T>) {
        let params = self.params;
        let mut nodes = self.nodes;
        nodes.truncate(loss + 1);
        let mut adj: Vec<Option<Matrix<T>>> = (0..nodes.len()).map(|_| None).collect();
        adj[loss] = Some(Matrix::from_vec(1, 1, vec![T::one()]));
        while let Some(node) = nodes.pop() {
            let id = nodes.len();
            let Some(dy) = adj[id].take() else { continue };
            let mut send = |target: NodeId, g: Matrix<T>| match &mut adj[target] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            };
            match node.op {
                Op::Input => {}
                Op::Embed {
                    ids,
                    positions,
                    tokens,
                    table,
                } => {
                    for (r, (&tok, &pos)) in ids.iter().zip(&positions).enumerate() {
                        let g = dy.row(r);
                        for (a, &b) in grads.tensors[tokens].row_mut(tok as usize).iter_mut().zip(g) {
                            *a += b;
                        }
                        for (a, &b) in grads.tensors[table].row_mut(pos).iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                }
                Op::Linear { x, w, b } => {
                    let xm = &nodes[x].value;
                    let wm = params.get(w);
                    let (n, din, dout) = (xm.rows, wm.rows, wm.cols);
                    let mut dx = Matrix::zeros(n, din);
                    gemm(
                        n,
                        dout,
                        din,
                        View::rows(&dy.data, dout),
                        View::transposed(&wm.data, dout),
                        T::zero(),
                        &mut dx.data,
                        din,
                    );
                    gemm(
                        din,
                        n,
                        dout,
                        View::transposed(&xm.data, din),
                        View::rows(&dy.data, dout),
                        T::one(),
                        &mut grads.tensors[w].data,
                        dout,
                    );
                    let db = &mut grads.tensors[b].data;
                    for r in 0..n {
                        for (a, &g) in db.iter_mut().zip(dy.row(r)) {
                            *a += g;
                        }
                    }
                    send(x, dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    means,
                    rstds,
                } => {
                    let xm = &nodes[x].value;
                    let d = xm.cols;
                    let gm = &params.get(gamma).data;
                    let nd = T::of(d as f64);
                    let mut dx = Matrix::zeros(xm.rows, d);
                    let mut xhat = vec![T::zero(); d];
                    let mut dxhat = vec![T::zero(); d];
                    for r in 0..xm.rows {
                        let (mean, rstd) = (means[r], rstds[r]);
                        let g = dy.row(r);
                        let (mut sum_d, mut sum_dx) = (T::zero(), T::zero());
                        for j in 0..d {
                            xhat[j] = (xm.row(r)[j] - mean) * rstd;
                            dxhat[j] = g[j] * gm[j];
                            sum_d += dxhat[j];
                            sum_dx += dxhat[j] * xhat[j];
                            grads.tensors[gamma].data[j] += g[j] * xhat[j];
                            grads.tensors[beta].data[j] += g[j];
                        }
                        let (mean_d, mean_dx) = (sum_d / nd, sum_dx / nd);
                        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = rstd * (dxhat[j] - mean_d - xhat[j] * mean_dx);
                        }
                    }
                    send(x, dx);
                }
                Op::Gelu { x } => {
                    let xm = &nodes[x].value;
                    let data = xm.data.iter().zip(&dy.data).map(|(&v, &g)| g * gelu_grad(v)).collect();
                    send(x, Matrix::from_vec(xm.rows, xm.cols, data));
                }
                Op::Add { a, b } => {
                    send(a, dy.clone());
                    send(b, dy);
                }
                Op::Dropout { x, keep } => {
                    let data = dy.data.iter().zip(&keep).map(|(&g, &k)| g * k).collect();
                    send(x, Matrix::from_vec(dy.rows, dy.cols, data));
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    segments,
                    probs,
                } => {
                    let (qm, km, vm) = (&nodes[q].value, &nodes[k].value, &nodes[v].value);
                    let d = qm.cols;
                    let hd = d / heads;
                    let inv = T::one() / T::of(hd as f64).sqrt();
                    let mut dq = Matrix::zeros(qm.rows, d);
                    let mut dk = Matrix::zeros(km.rows, d);
                    let mut dv = Matrix::zeros(vm.rows, d);
                    for (si, s) in segments.iter().enumerate() {
                        for h in 0..heads {
                            let p = &probs[si * heads + h];
                            let off_q = s.q_start * d + h * hd;
                            let off_k = s.k_start * d + h * hd;
                            let mut ds = vec![T::zero(); s.q_len * s.k_len];
                            gemm(
                                s.q_len,
                                hd,
                                s.k_len,
                                View::rows(&dy.data[off_q..], d),
                                View::transposed(&vm.data[off_k..], d),
                                T::zero(),
                                &mut ds,
                                s.k_len,
                            );
                            gemm(
                                s.k_len,
                                s.q_len,
                                hd,
                                View::transposed(p, s.k_len),
                                View::rows(&dy.data[off_q..], d),
                                T::one(),
                                &mut dv.data[off_k..],
                                d,
                            );
                            for i in 0..s.q_len {
                                let pr = &p[i * s.k_len..(i + 1) * s.k_len];
                                let dr = &mut ds[i * s.k_len..(i + 1) * s.k_len];
                                let dot = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum::<T>();
                                for (g, &pv) in dr.iter_mut().zip(pr) {
                                    *g = pv * (*g - dot) * inv;
                                }
                            }
                            gemm(
                                s.q_len,
                                s.k_len,
                                hd,
                                View::rows(&ds, s.k_len),
                                View::rows(&km.data[off_k..], d),
                                T::one(),
                                &mut dq.data[off_q..],
                                d,
                            );
                            gemm(
                                s.k_len,
                                s.q_len,
                                hd,
                                View::transposed(&ds, s.k_len),
                                View::rows(&qm.data[off_q..], d),
                                T::one(),
                                &mut dk.data[off_k..],
                                d,
                            );
                        }
                    }
                    send(q, dq);
                    send(k, dk);
                    send(v, dv);
                }
                Op::TiedLoss {
                    x,
                    tokens,
                    targets,
                    scale,
                    mut probs,
                } => {
                    let xm = &nodes[x].value;
                    let e = params.get(tokens);
                    let (n, d, vocab) = (xm.rows, xm.cols, e.rows);
                    let g = dy.data[0] * scale;
                    for (r, &t) in targets.iter().enumerate() {
                        probs.row_mut(r)[t as usize] -= T::one();
                    }
                    for v in &mut probs.data {
                        *v *= g;
                    }
                    let mut dx = Matrix::zeros(n, d);
                    gemm(
                        n,
                        vocab,
                        d,
                        View::rows(&probs.data, vocab),
                        View::rows(&e.data, d),
                        T::zero(),
                        &mut dx.data,
                        d,
                    );
                    gemm(
                        vocab,
                        n,
                        d,
                        View::transposed(&probs.data, vocab),
                        View::rows(&xm.data, d),
                        T::one(),
                        &mut grads.tensors[tokens].data,
                        d,
                    );
                    send(x, dx);
                }
            }
        }
    }
}
