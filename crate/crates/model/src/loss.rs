//! Training objectives. The plain functions are reference implementations;
//! [`batch_loss`] builds the same quantities on the tape.

use hoi_core::{HoiError, HoiOffset, Result, HUMAN_DIM, OBJECT_DIM};
use serde::{Deserialize, Serialize};

use crate::collate::Batch;
use crate::model::Model;
use crate::sample::ModelSample;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Mean cross-entropy over rows with a target.
pub fn loss_text(logits: &Tensor, targets: &[Option<usize>]) -> Result<f64> {
    if targets.len() != logits.rows {
        return Err(HoiError::Shape(format!("{} targets for {} rows", targets.len(), logits.rows)));
    }
    let mut total = 0.0;
    let mut count = 0;
    for (i, t) in targets.iter().enumerate() {
        if let Some(t) = t {
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[*t];
            count += 1;
        }
    }
    if count == 0 {
        return Err(HoiError::Domain("response mask is empty".into()));
    }
    Ok(total / count as f64)
}

/// Mean absolute difference.
pub fn loss_pose(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(HoiError::Shape(format!("pose lengths {} and {}", pred.len(), gt.len())));
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

/// Human term plus object term, each a mean absolute difference.
pub fn loss_hoi(pred: &HoiOffset, gt: &HoiOffset) -> Result<f64> {
    Ok(loss_pose(&pred.d_theta, &gt.d_theta)? + loss_pose(&pred.d_object, &gt.d_object)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub text: f64,
    pub pose: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { text: 1.0, pose: 1.0 }
    }
}

pub struct BatchLoss {
    pub total: NodeId,
    pub text: f64,
    /// Mean pose term over pose-supervised samples, 0 when there are none.
    pub pose: f64,
    pub logits: NodeId,
    pub hidden: NodeId,
}

/// `w_text * L_text + w_pose * mean over supervised samples of the pose terms`.
pub fn batch_loss(model: &Model, t: &mut Tape, batch: &Batch, samples: &[&ModelSample], w: LossWeights) -> Result<BatchLoss> {
    let out = model.forward(t, batch, samples)?;
    let text = t.cross_entropy(out.logits, &batch.targets)?;
    let mut terms = vec![(text, w.text)];
    let supervised: Vec<_> = batch.items.iter().filter_map(|it| it.pose_target.as_ref()).collect();
    let mut pose_value = 0.0;
    if !supervised.is_empty() {
        let n = supervised.len() as f64;
        let hid = t.rows(supervised.iter().map(|p| (out.hidden, p.human_pos)).collect());
        let pred = model.decode_human(t, hid);
        let gt = Tensor::from_vec(supervised.len(), HUMAN_DIM, supervised.iter().flat_map(|p| p.human).collect());
        let lh = t.l1(pred, gt, vec![1.0 / (HUMAN_DIM as f64 * n); supervised.len()])?;
        terms.push((lh, w.pose));
        pose_value += t.value(lh).item();
        let objects: Vec<_> = supervised.iter().filter_map(|p| p.object).collect();
        if !objects.is_empty() {
            let hid = t.rows(objects.iter().map(|(pos, _)| (out.hidden, *pos)).collect());
            let pred = model.decode_object(t, hid);
            let gt = Tensor::from_vec(objects.len(), OBJECT_DIM, objects.iter().flat_map(|(_, o)| *o).collect());
            let lo = t.l1(pred, gt, vec![1.0 / (OBJECT_DIM as f64 * n); objects.len()])?;
            terms.push((lo, w.pose));
            pose_value += t.value(lo).item();
        }
    }
    let text_value = t.value(text).item();
    let total = t.weighted_sum(terms);
    Ok(BatchLoss {
        total,
        text: text_value,
        pose: pose_value,
        logits: out.logits,
        hidden: out.hidden,
    })
}
