//! Cosine similarity and the normalized temperature-scaled cross-entropy
//! loss over batches of paired embeddings.

use crate::error::{Error, Result};
use crate::exec;
use crate::nn::Scalar;

/// Cosine similarity `a·b / (‖a‖‖b‖)`. Errors on zero-norm input.
pub fn cos_sim<S: Scalar>(a: &[S], b: &[S]) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine similarity over vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == S::zero() || nb == S::zero() {
        return Err(Error::Numeric(
            "cosine similarity is undefined for a zero vector".into(),
        ));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Loss value and the gradient with respect to the raw embeddings.
pub struct LossOutput<S> {
    pub loss: S,
    /// Row-major (batch, dim) gradient.
    pub grad: Vec<S>,
}

/// Temperature-scaled contrastive loss over a batch of `batch` embeddings
/// arranged so rows 2m and 2m+1 are a positive pair.
///
/// For an ordered positive pair (i, j):
/// `ℓ(i,j) = −log( exp(cos(zᵢ,zⱼ)/τ) / Σ_{k≠i} exp(cos(zᵢ,z_k)/τ) )`,
/// with the sum over every other batch member. The batch loss is the mean of
/// ℓ over all ordered pairs (i, j) and (j, i). Softmax terms are computed
/// with a per-row max shift for stability.
pub fn nt_xent_loss<S: Scalar>(
    embeddings: &[S],
    batch: usize,
    dim: usize,
    tau: S,
) -> Result<LossOutput<S>> {
    if batch == 0 || batch % 2 != 0 {
        return Err(Error::Shape(format!(
            "contrastive batches pair rows; got {batch} embeddings"
        )));
    }
    if embeddings.len() != batch * dim {
        return Err(Error::Shape(format!(
            "expected {}x{} embeddings, got {} values",
            batch,
            dim,
            embeddings.len()
        )));
    }
    if tau <= S::zero() {
        return Err(Error::Config("temperature must be positive".into()));
    }

    // Unit-normalize rows; cosine becomes a dot product.
    let mut norms = vec![S::zero(); batch];
    for (i, row) in embeddings.chunks_exact(dim).enumerate() {
        let mut sq = S::zero();
        for &v in row {
            sq = sq + v * v;
        }
        if sq == S::zero() {
            return Err(Error::Numeric(format!(
                "embedding {i} has zero norm; cosine similarity is undefined"
            )));
        }
        norms[i] = sq.sqrt();
    }
    let mut units = vec![S::zero(); batch * dim];
    exec::for_each_chunk_mut(&mut units, dim, |i, row| {
        let src = &embeddings[i * dim..(i + 1) * dim];
        for (u, &v) in row.iter_mut().zip(src) {
            *u = v / norms[i];
        }
    });

    // Full similarity matrix.
    let mut sim = vec![S::zero(); batch * batch];
    exec::for_each_chunk_mut(&mut sim, batch, |i, row| {
        let ui = &units[i * dim..(i + 1) * dim];
        for (j, slot) in row.iter_mut().enumerate() {
            let uj = &units[j * dim..(j + 1) * dim];
            let mut dot = S::zero();
            for (&a, &b) in ui.iter().zip(uj) {
                dot = dot + a * b;
            }
            *slot = dot;
        }
    });

    // Per-row softmax over k≠i of sim/τ, and the per-row loss term
    // ℓ_i = −s_ipos/τ + logΣ_{k≠i} exp(s_ik/τ), stabilized by the row max.
    let rows: Vec<(Vec<S>, S)> = exec::map_range(batch, |i| {
        let s_row = &sim[i * batch..(i + 1) * batch];
        let pos = i ^ 1;
        let mut max = S::neg_infinity();
        for (k, &s) in s_row.iter().enumerate() {
            if k != i {
                let scaled = s / tau;
                if scaled > max {
                    max = scaled;
                }
            }
        }
        let mut p_row = vec![S::zero(); batch];
        let mut denom = S::zero();
        for (k, &s) in s_row.iter().enumerate() {
            if k != i {
                let e = (s / tau - max).exp();
                p_row[k] = e;
                denom = denom + e;
            }
        }
        for p in p_row.iter_mut() {
            *p = *p / denom;
        }
        (p_row, max + denom.ln() - s_row[pos] / tau)
    });
    let mut probs = vec![S::zero(); batch * batch];
    let b_s = S::from_f64(batch as f64);
    let mut loss = S::zero();
    for (i, (p_row, li)) in rows.into_iter().enumerate() {
        probs[i * batch..(i + 1) * batch].copy_from_slice(&p_row);
        loss = loss + li;
    }
    loss = loss / b_s;

    // dL/ds_ij for j≠i, folding in both ordered terms that touch s_ij = s_ji:
    // c_ij = (p_ij − [j = pos(i)] + p_ji − [i = pos(j)]) / (B·τ).
    // dL/dz_i = Σ_j c_ij (u_j − s_ij u_i) / ‖z_i‖.
    let inv_btau = S::one() / (b_s * tau);
    let mut grad = vec![S::zero(); batch * dim];
    exec::for_each_chunk_mut(&mut grad, dim, |i, g_row| {
        let pos = i ^ 1;
        let s_row = &sim[i * batch..(i + 1) * batch];
        let mut acc = vec![S::zero(); dim];
        let mut along_ui = S::zero();
        for j in 0..batch {
            if j == i {
                continue;
            }
            let mut c = probs[i * batch + j] + probs[j * batch + i];
            if j == pos {
                c = c - S::one() - S::one();
            }
            let c = c * inv_btau;
            let uj = &units[j * dim..(j + 1) * dim];
            for (a, &u) in acc.iter_mut().zip(uj) {
                *a = *a + c * u;
            }
            along_ui = along_ui + c * s_row[j];
        }
        let ui = &units[i * dim..(i + 1) * dim];
        for ((g, &a), &u) in g_row.iter_mut().zip(&acc).zip(ui) {
            *g = (a - along_ui * u) / norms[i];
        }
    });

    Ok(LossOutput { loss, grad })
}
