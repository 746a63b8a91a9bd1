//! Tensor operations: forward kernels plus recorded backward rules.
//!
//! Per-op shape rules:
//! - `matmul`: `[..,M,K] x [..,K,N] -> [..,M,N]`; the right operand may be
//!   2-D, in which case it is shared across the batch and its gradient is
//!   reduced over the batch in a fixed order.
//! - `add` / `mul`: identical shapes, or right operand `[D]` broadcast over
//!   the trailing axis of `[..,D]` (the affine patterns used by the model).
//! - `sub`: identical shapes.
//! - `softmax`, `layernorm`, `cross_entropy`: operate on the last axis.
//! - `gather`: index-select along one axis; duplicate indices scatter-add
//!   in backward.
//! - `mean`, `mse_loss`, `cross_entropy` reduce to a `[1]` scalar.

use super::kernels;
use super::Tensor;
use crate::element::Element;
use crate::error::{Error, Result};

fn shape_err(context: &str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        context: context.to_string(),
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// True when `b` is a trailing-axis broadcast operand for `a`: `a=[..,D]`, `b=[D]`.
fn is_trailing_broadcast(a: &[usize], b: &[usize]) -> bool {
    b.len() == 1 && a.last() == Some(&b[0]) && a.len() > 1
}

impl<T: Element> Tensor<T> {
    /// Batched matrix product.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let ashape = self.shape();
        let bshape = rhs.shape();
        if ashape.len() < 2 || bshape.len() < 2 {
            return Err(shape_err("matmul requires rank >= 2", &ashape, &bshape));
        }
        let (m, k) = (ashape[ashape.len() - 2], ashape[ashape.len() - 1]);
        let (bk, n) = (bshape[bshape.len() - 2], bshape[bshape.len() - 1]);
        let shared_rhs = bshape.len() == 2 && ashape.len() > 2;
        if k != bk || (!shared_rhs && ashape[..ashape.len() - 2] != bshape[..bshape.len() - 2]) {
            return Err(shape_err("matmul", &ashape, &bshape));
        }
        let batch: usize = ashape[..ashape.len() - 2].iter().product();
        let mut out_shape = ashape[..ashape.len() - 2].to_vec();
        out_shape.push(m);
        out_shape.push(n);

        let mut out = vec![T::zero(); batch * m * n];
        self.with_data(|a| {
            rhs.with_data(|b| {
                if shared_rhs {
                    // a shared right operand makes the whole batch one
                    // flat [batch*m, k] x [k, n] product
                    kernels::matmul_nn(a, b, batch * m, k, n, &mut out);
                } else {
                    kernels::matmul_nn_batched(a, b, batch, m, k, n, &mut out);
                }
            })
        });

        let a_h = self.clone();
        let b_h = rhs.clone();
        let (a_req, b_req) = (self.requires_grad(), rhs.requires_grad());
        Ok(Tensor::from_op(
            out,
            out_shape,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                let mut da = vec![T::zero(); batch * m * k];
                let mut db = vec![T::zero(); k * n * if shared_rhs { 1 } else { batch }];
                a_h.with_data(|a| {
                    b_h.with_data(|b| {
                        if shared_rhs {
                            if a_req {
                                // dA = g * B^T
                                kernels::matmul_nt(g, b, batch * m, n, k, &mut da);
                            }
                            if b_req {
                                // dB = A^T * g, reduced over the batch
                                kernels::matmul_tn(a, g, batch * m, k, n, &mut db);
                            }
                        } else {
                            if a_req {
                                kernels::matmul_nt_batched(g, b, batch, m, n, k, &mut da);
                            }
                            if b_req {
                                kernels::matmul_tn_batched(a, g, batch, m, k, n, &mut db);
                            }
                        }
                    })
                });
                if a_req {
                    a_h.accumulate_grad(&da);
                }
                if b_req {
                    b_h.accumulate_grad(&db);
                }
            }),
        ))
    }

    /// Elementwise sum; `rhs` may be a `[D]` trailing-axis bias.
    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let ashape = self.shape();
        let bshape = rhs.shape();
        let broadcast = is_trailing_broadcast(&ashape, &bshape);
        if !broadcast && ashape != bshape {
            return Err(shape_err("add", &ashape, &bshape));
        }
        let d = *ashape.last().unwrap();
        let out = self.with_data(|a| {
            rhs.with_data(|b| {
                if broadcast {
                    a.iter()
                        .enumerate()
                        .map(|(i, &av)| av + b[i % d])
                        .collect::<Vec<T>>()
                } else {
                    a.iter().zip(b).map(|(&av, &bv)| av + bv).collect()
                }
            })
        });
        let a_h = self.clone();
        let b_h = rhs.clone();
        let (a_req, b_req) = (self.requires_grad(), rhs.requires_grad());
        Ok(Tensor::from_op(
            out,
            ashape,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                if a_req {
                    a_h.accumulate_grad(g);
                }
                if b_req {
                    if broadcast {
                        let mut db = vec![T::zero(); d];
                        for (i, &gv) in g.iter().enumerate() {
                            db[i % d] = db[i % d] + gv;
                        }
                        b_h.accumulate_grad(&db);
                    } else {
                        b_h.accumulate_grad(g);
                    }
                }
            }),
        ))
    }

    /// Elementwise difference (identical shapes).
    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let ashape = self.shape();
        let bshape = rhs.shape();
        if ashape != bshape {
            return Err(shape_err("sub", &ashape, &bshape));
        }
        let out = self.with_data(|a| {
            rhs.with_data(|b| a.iter().zip(b).map(|(&av, &bv)| av - bv).collect::<Vec<T>>())
        });
        let a_h = self.clone();
        let b_h = rhs.clone();
        let (a_req, b_req) = (self.requires_grad(), rhs.requires_grad());
        Ok(Tensor::from_op(
            out,
            ashape,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                if a_req {
                    a_h.accumulate_grad(g);
                }
                if b_req {
                    let neg: Vec<T> = g.iter().map(|&gv| -gv).collect();
                    b_h.accumulate_grad(&neg);
                }
            }),
        ))
    }

    /// Elementwise product; `rhs` may be a `[D]` trailing-axis gain.
    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let ashape = self.shape();
        let bshape = rhs.shape();
        let broadcast = is_trailing_broadcast(&ashape, &bshape);
        if !broadcast && ashape != bshape {
            return Err(shape_err("mul", &ashape, &bshape));
        }
        let d = *ashape.last().unwrap();
        let out = self.with_data(|a| {
            rhs.with_data(|b| {
                if broadcast {
                    a.iter()
                        .enumerate()
                        .map(|(i, &av)| av * b[i % d])
                        .collect::<Vec<T>>()
                } else {
                    a.iter().zip(b).map(|(&av, &bv)| av * bv).collect()
                }
            })
        });
        let a_h = self.clone();
        let b_h = rhs.clone();
        let (a_req, b_req) = (self.requires_grad(), rhs.requires_grad());
        Ok(Tensor::from_op(
            out,
            ashape,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                let (da, db) = a_h.with_data(|a| {
                    b_h.with_data(|b| {
                        let da: Vec<T> = if a_req {
                            if broadcast {
                                g.iter().enumerate().map(|(i, &gv)| gv * b[i % d]).collect()
                            } else {
                                g.iter().zip(b).map(|(&gv, &bv)| gv * bv).collect()
                            }
                        } else {
                            Vec::new()
                        };
                        let db: Vec<T> = if b_req {
                            if broadcast {
                                let mut acc = vec![T::zero(); d];
                                for (i, &gv) in g.iter().enumerate() {
                                    acc[i % d] = acc[i % d] + gv * a[i];
                                }
                                acc
                            } else {
                                g.iter().zip(a).map(|(&gv, &av)| gv * av).collect()
                            }
                        } else {
                            Vec::new()
                        };
                        (da, db)
                    })
                });
                if a_req {
                    a_h.accumulate_grad(&da);
                }
                if b_req {
                    b_h.accumulate_grad(&db);
                }
            }),
        ))
    }

    /// Multiply by a scalar constant.
    pub fn scale(&self, c: T) -> Result<Tensor<T>> {
        let shape = self.shape();
        let out = self.with_data(|a| a.iter().map(|&v| v * c).collect::<Vec<T>>());
        let a_h = self.clone();
        let a_req = self.requires_grad();
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone()],
            Box::new(move |g| {
                if a_req {
                    let da: Vec<T> = g.iter().map(|&gv| gv * c).collect();
                    a_h.accumulate_grad(&da);
                }
            }),
        ))
    }

    /// GELU with the exact erf formulation: `0.5 x (1 + erf(x / sqrt(2)))`.
    pub fn gelu(&self) -> Result<Tensor<T>> {
        let shape = self.shape();
        let half = T::from_f64(0.5);
        let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
        let inv_sqrt_2pi = T::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
        let out = self.with_data(|a| {
            a.iter()
                .map(|&x| half * x * (T::one() + Element::erf(x * inv_sqrt2)))
                .collect::<Vec<T>>()
        });
        let a_h = self.clone();
        let a_req = self.requires_grad();
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone()],
            Box::new(move |g| {
                if a_req {
                    let da = a_h.with_data(|a| {
                        a.iter()
                            .zip(g)
                            .map(|(&x, &gv)| {
                                let cdf = half * (T::one() + Element::erf(x * inv_sqrt2));
                                let pdf = inv_sqrt_2pi * (-half * x * x).exp();
                                gv * (cdf + x * pdf)
                            })
                            .collect::<Vec<T>>()
                    });
                    a_h.accumulate_grad(&da);
                }
            }),
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Tensor<T>> {
        let shape = self.shape();
        let d = *shape
            .last()
            .ok_or_else(|| Error::InvalidDim("softmax on rank-0 tensor".into()))?;
        let out = self.with_data(|a| {
            let mut y = vec![T::zero(); a.len()];
            for (row, yrow) in a.chunks(d).zip(y.chunks_mut(d)) {
                let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for (v, yv) in row.iter().zip(yrow.iter_mut()) {
                    *yv = (*v - max).exp();
                    sum = sum + *yv;
                }
                for yv in yrow.iter_mut() {
                    *yv = *yv / sum;
                }
            }
            y
        });
        let saved_y = out.clone();
        let a_h = self.clone();
        let a_req = self.requires_grad();
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone()],
            Box::new(move |g| {
                if a_req {
                    let mut da = vec![T::zero(); saved_y.len()];
                    for ((yrow, grow), darow) in
                        saved_y.chunks(d).zip(g.chunks(d)).zip(da.chunks_mut(d))
                    {
                        let mut dot = T::zero();
                        for (&yv, &gv) in yrow.iter().zip(grow) {
                            dot = dot + yv * gv;
                        }
                        for ((dv, &yv), &gv) in darow.iter_mut().zip(yrow).zip(grow) {
                            *dv = yv * (gv - dot);
                        }
                    }
                    a_h.accumulate_grad(&da);
                }
            }),
        ))
    }

    /// Layer normalization over the last axis followed by a `gamma/beta`
    /// affine. `eps` must be positive.
    pub fn layernorm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        if eps <= T::zero() {
            return Err(Error::InvalidDim("layernorm eps must be > 0".into()));
        }
        let shape = self.shape();
        let d = *shape.last().unwrap();
        let gshape = gamma.shape();
        let bshape = beta.shape();
        if gshape != [d] {
            return Err(shape_err("layernorm gamma", &shape, &gshape));
        }
        if bshape != [d] {
            return Err(shape_err("layernorm beta", &shape, &bshape));
        }
        let rows = self.numel() / d;
        let dt = T::from_f64(d as f64);

        let mut xhat = vec![T::zero(); rows * d];
        let mut inv_std = vec![T::zero(); rows];
        let out = self.with_data(|x| {
            gamma.with_data(|gm| {
                beta.with_data(|bt| {
                    let mut y = vec![T::zero(); rows * d];
                    for r in 0..rows {
                        let xr = &x[r * d..(r + 1) * d];
                        let mut mean = T::zero();
                        for &v in xr {
                            mean = mean + v;
                        }
                        mean = mean / dt;
                        let mut var = T::zero();
                        for &v in xr {
                            let c = v - mean;
                            var = var + c * c;
                        }
                        var = var / dt;
                        let inv = T::one() / (var + eps).sqrt();
                        inv_std[r] = inv;
                        for i in 0..d {
                            let xh = (xr[i] - mean) * inv;
                            xhat[r * d + i] = xh;
                            y[r * d + i] = gm[i] * xh + bt[i];
                        }
                    }
                    y
                })
            })
        });

        let x_h = self.clone();
        let g_h = gamma.clone();
        let b_h = beta.clone();
        let (x_req, g_req, b_req) = (
            self.requires_grad(),
            gamma.requires_grad(),
            beta.requires_grad(),
        );
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g| {
                let (dx, dgamma, dbeta) = g_h.with_data(|gm| {
                    let mut dx = if x_req { vec![T::zero(); rows * d] } else { Vec::new() };
                    let mut dgamma = vec![T::zero(); d];
                    let mut dbeta = vec![T::zero(); d];
                    for r in 0..rows {
                        let gr = &g[r * d..(r + 1) * d];
                        let xh = &xhat[r * d..(r + 1) * d];
                        if g_req || b_req {
                            for i in 0..d {
                                dgamma[i] = dgamma[i] + gr[i] * xh[i];
                                dbeta[i] = dbeta[i] + gr[i];
                            }
                        }
                        if x_req {
                            let mut sum_gg = T::zero();
                            let mut sum_ggx = T::zero();
                            for i in 0..d {
                                let gg = gr[i] * gm[i];
                                sum_gg = sum_gg + gg;
                                sum_ggx = sum_ggx + gg * xh[i];
                            }
                            let mean_gg = sum_gg / dt;
                            let mean_ggx = sum_ggx / dt;
                            for i in 0..d {
                                let gg = gr[i] * gm[i];
                                dx[r * d + i] = inv_std[r] * (gg - mean_gg - xh[i] * mean_ggx);
                            }
                        }
                    }
                    (dx, dgamma, dbeta)
                });
                if x_req {
                    x_h.accumulate_grad(&dx);
                }
                if g_req {
                    g_h.accumulate_grad(&dgamma);
                }
                if b_req {
                    b_h.accumulate_grad(&dbeta);
                }
            }),
        ))
    }

    /// Reshape to a new shape of the same element count.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = new_shape.iter().product();
        if numel != self.numel() || new_shape.iter().any(|&d| d == 0) {
            return Err(shape_err("reshape", &self.shape(), new_shape));
        }
        let out = self.to_vec();
        let a_h = self.clone();
        let a_req = self.requires_grad();
        Ok(Tensor::from_op(
            out,
            new_shape.to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                if a_req {
                    a_h.accumulate_grad(g);
                }
            }),
        ))
    }

    /// Permute axes (generalized transpose).
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let shape = self.shape();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::InvalidDim(format!(
                "permute axes {axes:?} is not a permutation of 0..{rank}"
            )));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let out = self.with_data(|a| kernels::permute(a, &shape, axes));
        let inv = kernels::inverse_axes(axes);
        let a_h = self.clone();
        let a_req = self.requires_grad();
        Ok(Tensor::from_op(
            out,
            out_shape.clone(),
            vec![self.clone()],
            Box::new(move |g| {
                if a_req {
                    let da = kernels::permute(g, &out_shape, &inv);
                    a_h.accumulate_grad(&da);
                }
            }),
        ))
    }

    /// Swap the last two axes.
    pub fn transpose(&self) -> Result<Tensor<T>> {
        let rank = self.shape().len();
        if rank < 2 {
            return Err(Error::InvalidDim("transpose requires rank >= 2".into()));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(rank - 2, rank - 1);
        self.permute(&axes)
    }

    /// Index-select along `axis`. Backward scatter-adds, so duplicate
    /// indices are allowed.
    pub fn gather(&self, axis: usize, indices: &[usize]) -> Result<Tensor<T>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::InvalidDim(format!(
                "gather axis {axis} out of range for shape {shape:?}"
            )));
        }
        let extent = shape[axis];
        if let Some(&bad) = indices.iter().find(|&&i| i >= extent) {
            return Err(Error::InvalidDim(format!(
                "gather index {bad} out of range for axis {axis} extent {extent}"
            )));
        }
        if indices.is_empty() {
            return Err(Error::InvalidDim("gather with empty index list".into()));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.clone();
        out_shape[axis] = indices.len();

        let out = self.with_data(|a| {
            let mut out = vec![T::zero(); outer * indices.len() * inner];
            for o in 0..outer {
                for (j, &ix) in indices.iter().enumerate() {
                    let src = (o * extent + ix) * inner;
                    let dst = (o * indices.len() + j) * inner;
                    out[dst..dst + inner].copy_from_slice(&a[src..src + inner]);
                }
            }
            out
        });

        let idx = indices.to_vec();
        let a_h = self.clone();
        let a_req = self.requires_grad();
        let in_numel = self.numel();
        Ok(Tensor::from_op(
            out,
            out_shape,
            vec![self.clone()],
            Box::new(move |g| {
                if a_req {
                    let mut da = vec![T::zero(); in_numel];
                    for o in 0..outer {
                        for (j, &ix) in idx.iter().enumerate() {
                            let dst = (o * extent + ix) * inner;
                            let src = (o * idx.len() + j) * inner;
                            for t in 0..inner {
                                da[dst + t] = da[dst + t] + g[src + t];
                            }
                        }
                    }
                    a_h.accumulate_grad(&da);
                }
            }),
        ))
    }

    /// Concatenate two tensors along `axis`.
    pub fn concat(a: &Tensor<T>, b: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
        let ashape = a.shape();
        let bshape = b.shape();
        if ashape.len() != bshape.len()
            || axis >= ashape.len()
            || ashape
                .iter()
                .zip(&bshape)
                .enumerate()
                .any(|(i, (x, y))| i != axis && x != y)
        {
            return Err(shape_err("concat", &ashape, &bshape));
        }
        let outer: usize = ashape[..axis].iter().product();
        let inner: usize = ashape[axis + 1..].iter().product();
        let (ae, be) = (ashape[axis], bshape[axis]);
        let mut out_shape = ashape.clone();
        out_shape[axis] = ae + be;

        let out = a.with_data(|ad| {
            b.with_data(|bd| {
                let mut out = vec![T::zero(); outer * (ae + be) * inner];
                for o in 0..outer {
                    let dst = o * (ae + be) * inner;
                    out[dst..dst + ae * inner]
                        .copy_from_slice(&ad[o * ae * inner..(o + 1) * ae * inner]);
                    out[dst + ae * inner..dst + (ae + be) * inner]
                        .copy_from_slice(&bd[o * be * inner..(o + 1) * be * inner]);
                }
                out
            })
        });

        let a_h = a.clone();
        let b_h = b.clone();
        let (a_req, b_req) = (a.requires_grad(), b.requires_grad());
        Ok(Tensor::from_op(
            out,
            out_shape,
            vec![a.clone(), b.clone()],
            Box::new(move |g| {
                if a_req {
                    let mut da = vec![T::zero(); outer * ae * inner];
                    for o in 0..outer {
                        let src = o * (ae + be) * inner;
                        da[o * ae * inner..(o + 1) * ae * inner]
                            .copy_from_slice(&g[src..src + ae * inner]);
                    }
                    a_h.accumulate_grad(&da);
                }
                if b_req {
                    let mut db = vec![T::zero(); outer * be * inner];
                    for o in 0..outer {
                        let src = o * (ae + be) * inner + ae * inner;
                        db[o * be * inner..(o + 1) * be * inner]
                            .copy_from_slice(&g[src..src + be * inner]);
                    }
                    b_h.accumulate_grad(&db);
                }
            }),
        ))
    }

    /// Mean over all elements, producing a `[1]` scalar.
    pub fn mean(&self) -> Result<Tensor<T>> {
        let n = self.numel();
        let nt = T::from_f64(n as f64);
        let sum = self.with_data(|a| a.iter().fold(T::zero(), |acc, &v| acc + v));
        let a_h = self.clone();
        let a_req = self.requires_grad();
        Ok(Tensor::from_op(
            vec![sum / nt],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| {
                if a_req {
                    let gv = g[0] / nt;
                    a_h.accumulate_grad(&vec![gv; n]);
                }
            }),
        ))
    }

    /// Mean squared error against a constant target of identical shape.
    pub fn mse_loss(&self, target: &Tensor<T>) -> Result<Tensor<T>> {
        let pshape = self.shape();
        let tshape = target.shape();
        if pshape != tshape {
            return Err(shape_err("mse_loss", &pshape, &tshape));
        }
        if target.requires_grad() {
            return Err(Error::InvalidDim(
                "mse_loss target must not require gradients".into(),
            ));
        }
        let n = self.numel();
        let nt = T::from_f64(n as f64);
        let loss = self.with_data(|p| {
            target.with_data(|t| {
                let mut acc = T::zero();
                for (&pv, &tv) in p.iter().zip(t) {
                    let r = pv - tv;
                    acc = acc + r * r;
                }
                acc / nt
            })
        });
        let p_h = self.clone();
        let t_h = target.clone();
        let p_req = self.requires_grad();
        Ok(Tensor::from_op(
            vec![loss],
            vec![1],
            vec![self.clone(), target.clone()],
            Box::new(move |g| {
                if p_req {
                    let two = T::from_f64(2.0);
                    let da = p_h.with_data(|p| {
                        t_h.with_data(|t| {
                            p.iter()
                                .zip(t)
                                .map(|(&pv, &tv)| g[0] * two * (pv - tv) / nt)
                                .collect::<Vec<T>>()
                        })
                    });
                    p_h.accumulate_grad(&da);
                }
            }),
        ))
    }

    /// Mean cross-entropy of row logits `[M,k]` against integer class
    /// targets (softmax folded in for stability).
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(Error::InvalidDim(format!(
                "cross_entropy expects [rows, classes] logits, got {shape:?}"
            )));
        }
        let (m, k) = (shape[0], shape[1]);
        if targets.len() != m {
            return Err(Error::InvalidDim(format!(
                "cross_entropy got {m} logit rows but {} targets",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::InvalidDim(format!(
                "cross_entropy target {bad} out of range for {k} classes"
            )));
        }
        let mt = T::from_f64(m as f64);
        let mut probs = vec![T::zero(); m * k];
        let loss = self.with_data(|logits| {
            let mut acc = T::zero();
            for (r, &t) in targets.iter().enumerate() {
                let row = &logits[r * k..(r + 1) * k];
                let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for (j, &v) in row.iter().enumerate() {
                    let e = (v - max).exp();
                    probs[r * k + j] = e;
                    sum = sum + e;
                }
                for j in 0..k {
                    probs[r * k + j] = probs[r * k + j] / sum;
                }
                // -log p[target] computed from the stable pieces
                acc = acc + (sum.ln() - (row[t] - max));
            }
            acc / mt
        });
        let tgt = targets.to_vec();
        let l_h = self.clone();
        let l_req = self.requires_grad();
        Ok(Tensor::from_op(
            vec![loss],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| {
                if l_req {
                    let mut da = vec![T::zero(); m * k];
                    for (r, &t) in tgt.iter().enumerate() {
                        for j in 0..k {
                            let indic = if j == t { T::one() } else { T::zero() };
                            da[r * k + j] = g[0] * (probs[r * k + j] - indic) / mt;
                        }
                    }
                    l_h.accumulate_grad(&da);
                }
            }),
        ))
    }

    /// Affine map: `x @ w + b` with `w=[in,out]`, `b=[out]`.
    pub fn linear(&self, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.matmul(w)?.add(b)
    }
}
