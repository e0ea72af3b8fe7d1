//! Memory-bank numerics: a non-parametric softmax over stored class features,
//! the repelled (negative log-likelihood) loss, the running slot update, and
//! the gradient-step feature refinement that stands in for retraining a
//! feature extractor.

use log::debug;

use crate::dataset::{dot, normalize_in_place, EmbeddingSet};
use crate::error::{Error, Result};
use crate::state::{ClusterState, NOISE};

/// Probability floor applied before taking the log in [`repelled_loss`].
pub const PROBABILITY_FLOOR: f64 = 1e-30;

/// One unit-norm feature slot per class.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMemory {
    d: usize,
    beta: f64,
    slots: Vec<f64>,
}

impl FeatureMemory {
    /// One slot per embedding row, each renormalised.
    pub fn from_embeddings(embeddings: &EmbeddingSet, beta: f64) -> Self {
        let mut slots = embeddings.as_slice().to_vec();
        for slot in slots.chunks_exact_mut(embeddings.dim()) {
            normalize_in_place(slot);
        }
        Self {
            d: embeddings.dim(),
            beta,
            slots,
        }
    }

    /// One slot per pseudo-class holding the renormalised class centroid.
    /// Labels must be dense `0..C` with no noise.
    pub fn from_centroids(
        embeddings: &EmbeddingSet,
        state: &ClusterState,
        beta: f64,
    ) -> Result<Self> {
        let d = embeddings.dim();
        let classes = state.next_label() as usize;
        let mut slots = vec![0.0; classes * d];
        let mut first_member = vec![usize::MAX; classes];
        for (i, &label) in state.labels().iter().enumerate() {
            if label == NOISE {
                return Err(Error::Shape(format!("sample {i} is unlabelled")));
            }
            let c = label as usize;
            if first_member[c] == usize::MAX {
                first_member[c] = i;
            }
            for (s, x) in slots[c * d..(c + 1) * d].iter_mut().zip(embeddings.row(i)) {
                *s += x;
            }
        }
        for (c, slot) in slots.chunks_exact_mut(d).enumerate() {
            if first_member[c] == usize::MAX {
                return Err(Error::Shape(format!("label {c} has no members")));
            }
            if !normalize_in_place(slot) {
                slot.copy_from_slice(embeddings.row(first_member[c]));
            }
        }
        Ok(Self { d, beta, slots })
    }

    pub fn classes(&self) -> usize {
        self.slots.len() / self.d
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn slot(&self, c: usize) -> &[f64] {
        &self.slots[c * self.d..(c + 1) * self.d]
    }

    fn check_dim(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: f.len(),
            });
        }
        Ok(())
    }

    fn check_class(&self, y: usize) -> Result<()> {
        if y >= self.classes() {
            return Err(Error::ClassOutOfRange {
                index: y,
                classes: self.classes(),
            });
        }
        Ok(())
    }

    /// `M[c]·f / β` for every class.
    pub fn logits(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(f)?;
        Ok(self
            .slots
            .chunks_exact(self.d)
            .map(|m| dot(m, f) / self.beta)
            .collect())
    }

    /// Softmax of [`FeatureMemory::logits`], computed with max-subtraction.
    pub fn predict_prob(&self, f: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(f)?))
    }

    /// Gradient of `-log p_y` with respect to `f`: `(Σ_c p_c M[c] - M[y]) / β`.
    pub fn loss_gradient(&self, f: &[f64], y: usize) -> Result<Vec<f64>> {
        self.check_class(y)?;
        let p = self.predict_prob(f)?;
        Ok(self.gradient_from_prob(&p, y))
    }

    fn gradient_from_prob(&self, p: &[f64], y: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for (pc, m) in p.iter().zip(self.slots.chunks_exact(self.d)) {
            if *pc == 0.0 {
                continue;
            }
            for (gi, mi) in g.iter_mut().zip(m) {
                *gi += pc * mi;
            }
        }
        for (gi, mi) in g.iter_mut().zip(self.slot(y)) {
            *gi = (*gi - mi) / self.beta;
        }
        g
    }

    /// `M[y] ← normalize((M[y] + f) / 2)`. Returns `false` and keeps the old
    /// slot when the average has zero norm.
    pub fn update_slot(&mut self, y: usize, f: &[f64]) -> Result<bool> {
        self.check_class(y)?;
        self.check_dim(f)?;
        let d = self.d;
        let mut avg: Vec<f64> = self.slots[y * d..(y + 1) * d]
            .iter()
            .zip(f)
            .map(|(m, x)| 0.5 * (m + x))
            .collect();
        if !normalize_in_place(&mut avg) {
            debug!("slot {y}: averaged feature has zero norm, keeping previous slot");
            return Ok(false);
        }
        self.slots[y * d..(y + 1) * d].copy_from_slice(&avg);
        Ok(true)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Loss {
    pub value: f64,
    /// The target probability was below [`PROBABILITY_FLOOR`] and was clamped.
    pub floored: bool,
}

/// `-log p_y`, clamping `p_y` at [`PROBABILITY_FLOOR`].
pub fn repelled_loss(p: &[f64], y: usize) -> Result<Loss> {
    let &py = p.get(y).ok_or(Error::ClassOutOfRange {
        index: y,
        classes: p.len(),
    })?;
    let floored = py < PROBABILITY_FLOOR;
    if floored {
        debug!("target probability {py:e} clamped to {PROBABILITY_FLOOR:e}");
    }
    Ok(Loss {
        value: (-py.max(PROBABILITY_FLOOR).ln()).max(0.0),
        floored,
    })
}

/// Output of the recognition stage.
#[derive(Clone, Debug)]
pub struct Recognition {
    pub embeddings: EmbeddingSet,
    pub memory: FeatureMemory,
    /// Mean repelled loss per epoch, measured before each sample's step.
    pub epoch_losses: Vec<f64>,
}

/// Instance-level training surrogate: every sample is its own class. Each
/// epoch visits samples in ascending index order, takes one gradient step of
/// size `rate` on the repelled loss and folds the new feature into its slot.
pub fn recognition_stage(
    embeddings: &EmbeddingSet,
    epochs: usize,
    rate: f64,
    beta: f64,
) -> Result<Recognition> {
    let mut features = embeddings.clone();
    let mut memory = FeatureMemory::from_embeddings(embeddings, beta);
    let mut epoch_losses = Vec::with_capacity(epochs);
    let n = features.len();
    for _ in 0..epochs {
        let mut total = 0.0;
        for i in 0..n {
            let p = memory.predict_prob(features.row(i))?;
            total += repelled_loss(&p, i)?.value;
            let g = memory.gradient_from_prob(&p, i);
            step(features.row_mut(i), &g, rate);
            memory.update_slot(i, features.row(i))?;
        }
        epoch_losses.push(total / n as f64);
    }
    Ok(Recognition {
        embeddings: features,
        memory,
        epoch_losses,
    })
}

/// `f ← normalize(f - rate·g)`; leaves `f` untouched if the result vanishes.
fn step(f: &mut [f64], g: &[f64], rate: f64) {
    if rate == 0.0 {
        return;
    }
    let mut next: Vec<f64> = f.iter().zip(g).map(|(x, gi)| x - rate * gi).collect();
    if normalize_in_place(&mut next) {
        f.copy_from_slice(&next);
    }
}

/// One repelled-loss gradient step of every embedding towards the slot of its
/// pseudo-class. The memory is a fixed snapshot during the pass.
pub fn refine_features(
    embeddings: &EmbeddingSet,
    state: &ClusterState,
    memory: &FeatureMemory,
    rate: f64,
) -> Result<EmbeddingSet> {
    if state.len() != embeddings.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} embeddings",
            state.len(),
            embeddings.len()
        )));
    }
    let mut out = embeddings.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    for i in 0..out.len() {
        let label = state.label(i);
        if label == NOISE {
            return Err(Error::Shape(format!("sample {i} is unlabelled")));
        }
        let g = memory.loss_gradient(out.row(i), label as usize)?;
        step(out.row_mut(i), &g, rate);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    fn orthonormal(beta: f64) -> FeatureMemory {
        FeatureMemory::from_embeddings(
            &EmbeddingSet::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            beta,
        )
    }

    #[test]
    fn softmax_examples() {
        let single =
            FeatureMemory::from_embeddings(&EmbeddingSet::from_rows(&[[0.0, 1.0]]).unwrap(), 0.1);
        assert_eq!(single.predict_prob(&[1.0, 0.0]).unwrap(), vec![1.0]);

        let p = orthonormal(1.0).predict_prob(&[1.0, 0.0]).unwrap();
        assert!((p[0] - E / (E + 1.0)).abs() < 1e-12);
        assert!((p[0] - 0.731_059).abs() < 1e-6);
        assert!((p[1] - 0.268_941).abs() < 1e-6);

        let p = orthonormal(0.1).predict_prob(&[1.0, 0.0]).unwrap();
        assert!((p[0] - 0.999_954_6).abs() < 1e-7);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        assert!(matches!(
            orthonormal(1.0).predict_prob(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn loss_examples() {
        assert_eq!(repelled_loss(&[1.0], 0).unwrap().value, 0.0);
        let half = repelled_loss(&[0.5, 0.5], 1).unwrap();
        assert!((half.value - 2f64.ln()).abs() < 1e-15);
        let uniform = vec![0.2; 5];
        assert!((repelled_loss(&uniform, 3).unwrap().value - 5f64.ln()).abs() < 1e-12);

        let floored = repelled_loss(&[1.0, 0.0], 1).unwrap();
        assert!(floored.floored);
        assert!((floored.value - (-PROBABILITY_FLOOR.ln())).abs() < 1e-9);
        assert!(repelled_loss(&[1.0], 1).is_err());
    }

    #[test]
    fn gradient_closed_forms() {
        let single =
            FeatureMemory::from_embeddings(&EmbeddingSet::from_rows(&[[0.6, 0.8]]).unwrap(), 0.1);
        assert!(single
            .loss_gradient(&[1.0, 0.0], 0)
            .unwrap()
            .iter()
            .all(|&g| g.abs() < 1e-15));

        let mem = orthonormal(1.0);
        let g = mem.loss_gradient(&[1.0, 0.0], 0).unwrap();
        let p0 = E / (E + 1.0);
        let p1 = 1.0 / (E + 1.0);
        assert!((g[0] - (p0 - 1.0)).abs() < 1e-12);
        assert!((g[1] - p1).abs() < 1e-12);
        assert!(mem.loss_gradient(&[1.0, 0.0], 2).is_err());
    }

    #[test]
    fn update_slot_examples() {
        let mut mem = orthonormal(0.1);
        assert!(mem.update_slot(0, &[0.0, 1.0]).unwrap());
        let h = 2f64.sqrt() / 2.0;
        assert!((mem.slot(0)[0] - h).abs() < 1e-15);
        assert!((mem.slot(0)[1] - h).abs() < 1e-15);
        assert_eq!(mem.slot(1), &[0.0, 1.0]);

        let before = mem.clone();
        assert!(mem.update_slot(1, &[0.0, 1.0]).unwrap());
        assert_eq!(mem, before);

        let mut mem = orthonormal(0.1);
        assert!(!mem.update_slot(0, &[-1.0, 0.0]).unwrap());
        assert_eq!(mem.slot(0), &[1.0, 0.0]);
    }

    #[test]
    fn repeated_updates_converge() {
        let mut mem = orthonormal(0.1);
        let target = [0.6, 0.8];
        let mut last = f64::INFINITY;
        for _ in 0..40 {
            mem.update_slot(0, &target).unwrap();
            let gap = crate::metric::sq_euclidean(mem.slot(0), &target);
            assert!(gap <= last);
            last = gap;
        }
        assert!(last < 1e-12);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let e = EmbeddingSet::from_rows(&[[1.0, 0.0], [0.6, 0.8]]).unwrap();
        let r = recognition_stage(&e, 0, 0.5, 0.1).unwrap();
        assert_eq!(r.embeddings, e);
        assert_eq!(r.memory, FeatureMemory::from_embeddings(&e, 0.1));
        assert!(r.epoch_losses.is_empty());
    }

    #[test]
    fn recognition_pushes_instances_apart() {
        let e = EmbeddingSet::from_rows(&[[1.0, 0.0], [0.6, 0.8]]).unwrap();
        let before = crate::metric::sq_euclidean(e.row(0), e.row(1));
        let r = recognition_stage(&e, 5, 0.5, 0.1).unwrap();
        let after = crate::metric::sq_euclidean(r.embeddings.row(0), r.embeddings.row(1));
        assert!(after >= before, "{after} < {before}");
    }

    #[test]
    fn refine_zero_rate_is_identity() {
        let e = EmbeddingSet::from_rows(&[[1.0, 0.0], [0.6, 0.8]]).unwrap();
        let state = ClusterState::new(vec![0, 0], vec![None; 2]);
        let mem = FeatureMemory::from_centroids(&e, &state, 0.1).unwrap();
        assert_eq!(refine_features(&e, &state, &mem, 0.0).unwrap(), e);
    }

    #[test]
    fn refine_pulls_shared_label_together() {
        let e =
            EmbeddingSet::from_rows(&[[1.0, 0.0, 0.0], [0.6, 0.8, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let state = ClusterState::new(vec![0, 0, 1], vec![None; 3]);
        let mem = FeatureMemory::from_centroids(&e, &state, 0.1).unwrap();
        let out = refine_features(&e, &state, &mem, 0.5).unwrap();
        let before = crate::metric::sq_euclidean(e.row(0), e.row(1));
        let after = crate::metric::sq_euclidean(out.row(0), out.row(1));
        assert!(after <= before, "{after} > {before}");
        for row in out.rows() {
            assert!((crate::dataset::l2_norm(row) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn centroid_memory_requires_labels() {
        let e = EmbeddingSet::from_rows(&[[1.0, 0.0], [0.6, 0.8]]).unwrap();
        let state = ClusterState::new(vec![0, NOISE], vec![None; 2]);
        assert!(FeatureMemory::from_centroids(&e, &state, 0.1).is_err());
    }
}
