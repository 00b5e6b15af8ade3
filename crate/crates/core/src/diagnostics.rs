//! Measurements on edited models: feature-distance traces, per-projection
//! update norms, deviation injection and output degradation on probe prompts.

use serde::{Deserialize, Serialize};

use crate::erasure::{relative, ConceptSpec};
use crate::error::{DiagnosticsError, LinalgError};
use crate::linalg::{fro_norm, Matrix};
use crate::model::{BlockKind, ModelStack};
use crate::report::ReportRow;

/// Frobenius distance and angle (degrees) between vectorized feature matrices.
///
/// The angle is `arccos(⟨x, y⟩ / (‖x‖‖y‖))`, evaluated as
/// `2·atan2(‖x̂ − ŷ‖, ‖x̂ + ŷ‖)` on the normalized inputs so that identical
/// inputs give exactly zero. It is defined as 0 when either norm is 0.
pub fn feature_distance(x: &Matrix, y: &Matrix) -> Result<(f64, f64), LinalgError> {
    let dist = fro_norm(&x.sub(y)?);
    let (nx, ny) = (fro_norm(x), fro_norm(y));
    if nx == 0.0 || ny == 0.0 || dist == 0.0 {
        return Ok((dist, 0.0));
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.data().iter().zip(y.data()) {
        let (u, v) = (a / nx, b / ny);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    let angle = 2.0 * diff.sqrt().atan2(sum.sqrt());
    Ok((dist, angle.to_degrees().clamp(0.0, 180.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDistance {
    /// 0 for embeddings, `i` for the output of block `i`.
    pub stage: usize,
    pub block_kind: Option<BlockKind>,
    pub dist_fro: f64,
    pub dist_angular_deg: f64,
}

impl From<&StageDistance> for ReportRow {
    fn from(s: &StageDistance) -> Self {
        ReportRow {
            layer_index: s.stage,
            block_kind: s.block_kind.map_or("embedding", BlockKind::as_str).to_string(),
            projection: String::new(),
            delta_fro: None,
            delta_rel: None,
            residual_pre: None,
            residual_post: None,
            dist_fro: Some(s.dist_fro),
            dist_angular_deg: Some(s.dist_angular_deg),
        }
    }
}

/// Distance between target features of `model_post` and anchor features of
/// `model_pre` at every stage.
pub fn distance_trace(
    model_pre: &ModelStack,
    model_post: &ModelStack,
    concept: &ConceptSpec,
) -> Result<Vec<StageDistance>, DiagnosticsError> {
    model_pre.check_same_structure(model_post).map_err(DiagnosticsError::Structure)?;
    concept.validate(model_pre).map_err(|e| DiagnosticsError::Param(e.to_string()))?;
    let (targets, anchors) = concept.prompts(model_pre.pad_token_id);
    let xs = model_post.extract_features(&targets)?;
    let ys = model_pre.extract_features(&anchors)?;
    xs.stages
        .iter()
        .zip(&ys.stages)
        .enumerate()
        .map(|(i, (x, y))| {
            let pick = |f| concept.select(f).map_err(|e| DiagnosticsError::Param(e.to_string()));
            let (dist_fro, dist_angular_deg) = feature_distance(&pick(x)?, &pick(y)?)?;
            Ok(StageDistance {
                stage: i,
                block_kind: i.checked_sub(1).map(|b| model_pre.blocks[b].kind()),
                dist_fro,
                dist_angular_deg,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDelta {
    pub layer_index: usize,
    pub block_kind: BlockKind,
    pub projection: String,
    pub delta_fro: f64,
    /// `delta_fro / ‖W_o‖_F`
    pub delta_rel: f64,
}

impl From<&ProjectionDelta> for ReportRow {
    fn from(p: &ProjectionDelta) -> Self {
        ReportRow {
            layer_index: p.layer_index,
            block_kind: p.block_kind.as_str().to_string(),
            projection: p.projection.clone(),
            delta_fro: Some(p.delta_fro),
            delta_rel: Some(p.delta_rel),
            residual_pre: None,
            residual_post: None,
            dist_fro: None,
            dist_angular_deg: None,
        }
    }
}

/// `‖W_post − W_pre‖_F` for every editable projection, shallowest first.
pub fn delta_profile(model_pre: &ModelStack, model_post: &ModelStack) -> Result<Vec<ProjectionDelta>, DiagnosticsError> {
    model_pre.check_same_structure(model_post).map_err(DiagnosticsError::Structure)?;
    let mut out = Vec::new();
    for (i, (pre, post)) in model_pre.blocks.iter().zip(&model_post.blocks).enumerate() {
        for ((name, w_pre), (_, w_post)) in pre.editable().into_iter().zip(post.editable()) {
            let delta_fro = fro_norm(&w_post.sub(w_pre)?);
            out.push(ProjectionDelta {
                layer_index: i + 1,
                block_kind: pre.kind(),
                projection: name.to_string(),
                delta_fro,
                delta_rel: relative(delta_fro, fro_norm(w_pre)),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    /// 1-based block index.
    pub layer_index: usize,
    pub alpha: f64,
    pub projection: String,
    /// Norm to scale by instead of the current `‖W‖_F`; lets a later
    /// injection undo an earlier one exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_norm: Option<f64>,
}

impl InjectionSpec {
    pub fn new(layer_index: usize, projection: impl Into<String>, alpha: f64) -> Self {
        Self { layer_index, alpha, projection: projection.into(), reference_norm: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub layer_index: usize,
    pub projection: String,
    pub alpha: f64,
    /// `‖W‖_F` before injection.
    pub pre_norm: f64,
    /// Norm used for scaling (equals `pre_norm` unless a reference was given).
    pub scale_norm: f64,
    /// `‖Δ‖_F = |α|·scale_norm·√d`
    pub delta_fro: f64,
}

/// `W ← W + α·‖W‖_F·I` on one square projection.
pub fn inject_deviation(model: &ModelStack, spec: &InjectionSpec) -> Result<(ModelStack, InjectionRecord), DiagnosticsError> {
    if !spec.alpha.is_finite() {
        return Err(DiagnosticsError::Param(format!("alpha must be finite (got {})", spec.alpha)));
    }
    if spec.layer_index < 1 || spec.layer_index > model.depth() {
        return Err(DiagnosticsError::Param(format!("layer {} outside 1..={}", spec.layer_index, model.depth())));
    }
    let block = &model.blocks[spec.layer_index - 1];
    let w = block.weight(&spec.projection).ok_or_else(|| {
        DiagnosticsError::Param(format!("{} block at layer {} has no projection '{}'", block.kind(), spec.layer_index, spec.projection))
    })?;
    if !w.is_square() {
        return Err(DiagnosticsError::Param(format!(
            "projection {} is {}x{}; identity injection needs a square matrix",
            spec.projection,
            w.rows(),
            w.cols()
        )));
    }
    let pre_norm = fro_norm(w);
    let scale_norm = spec.reference_norm.unwrap_or(pre_norm);
    let delta = Matrix::identity(w.rows()).scale(spec.alpha * scale_norm)?;
    let mut out = model.clone();
    out.blocks[spec.layer_index - 1].set_weight(&spec.projection, w.add(&delta)?)?;
    let record = InjectionRecord {
        layer_index: spec.layer_index,
        projection: spec.projection.clone(),
        alpha: spec.alpha,
        pre_norm,
        scale_norm,
        delta_fro: fro_norm(&delta),
    };
    Ok((out, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Mean relative output error over the probe prompts.
    pub degradation: f64,
    pub per_prompt: Vec<f64>,
}

/// Mean of `‖O_edited − O_pre‖_F / ‖O_pre‖_F` over probe prompts, where `O`
/// is the final-stage output (the sink output when the model has one).
pub fn probe_degradation(
    model_edited: &ModelStack,
    model_pre: &ModelStack,
    probe_prompts: &[Vec<usize>],
) -> Result<ProbeResult, DiagnosticsError> {
    if probe_prompts.is_empty() {
        return Err(DiagnosticsError::Param("probe set is empty".into()));
    }
    model_pre.check_same_structure(model_edited).map_err(DiagnosticsError::Structure)?;
    let edited = model_edited.outputs(probe_prompts)?;
    let pre = model_pre.outputs(probe_prompts)?;
    let per_prompt = edited
        .iter()
        .zip(&pre)
        .map(|(e, p)| Ok(relative(fro_norm(&e.sub(p)?), fro_norm(p))))
        .collect::<Result<Vec<f64>, LinalgError>>()?;
    let degradation = per_prompt.iter().sum::<f64>() / per_prompt.len() as f64;
    Ok(ProbeResult { degradation, per_prompt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erasure::{erase, EditPlan};
    use crate::model::GenSpec;

    fn stack(seed: u64) -> ModelStack {
        ModelStack::generate(&GenSpec::new(8, 4, 16, 32, seed)).unwrap()
    }

    #[test]
    fn distance_examples() {
        let x = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let y = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let (d, a) = feature_distance(&x, &y).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!((a - 90.0).abs() < 1e-12);
        let (d, a) = feature_distance(&x, &x.scale(-1.0).unwrap()).unwrap();
        assert_eq!(d, 2.0);
        assert!((a - 180.0).abs() < 1e-12);
        assert_eq!(feature_distance(&x, &Matrix::zeros(1, 2)).unwrap().1, 0.0);
        assert_eq!(feature_distance(&x, &x).unwrap(), (0.0, 0.0));
        // agrees with the arccos definition away from the ends
        let p = Matrix::from_rows(&[[1.0, 2.0, -0.5]]).unwrap();
        let q = Matrix::from_rows(&[[0.3, 1.0, 2.0]]).unwrap();
        let cos = p.frobenius_dot(&q).unwrap() / (fro_norm(&p) * fro_norm(&q));
        assert!((feature_distance(&p, &q).unwrap().1 - cos.clamp(-1.0, 1.0).acos().to_degrees()).abs() < 1e-10);
    }

    #[test]
    fn pretrained_trace_with_identical_prompts_is_zero() {
        let m = stack(1);
        let trace = distance_trace(&m, &m, &ConceptSpec::single(vec![1, 2, 3], vec![1, 2, 3])).unwrap();
        assert_eq!(trace.len(), 5);
        assert!(trace.iter().all(|s| s.dist_fro == 0.0 && s.dist_angular_deg == 0.0));
        assert_eq!(ReportRow::from(&trace[0]).block_kind, "embedding");
    }

    #[test]
    fn trace_after_erasure_reaches_zero_at_the_sink() {
        let m = stack(2);
        let concept = ConceptSpec::single(vec![1, 2, 3], vec![4, 5, 6]);
        let out = erase(&m, &EditPlan::new("erasepro", concept.clone())).unwrap();
        let trace = distance_trace(&m, &out.model, &concept).unwrap();
        assert!(trace[0].dist_fro > 0.1);
        assert!(trace.last().unwrap().dist_fro <= 1e-9);
    }

    #[test]
    fn delta_profile_scopes() {
        let m = stack(3);
        assert!(delta_profile(&m, &m).unwrap().iter().all(|p| p.delta_fro == 0.0 && p.delta_rel == 0.0));
        let concept = ConceptSpec::single(vec![1, 2, 3], vec![4, 5, 6]);
        let out = erase(&m, &EditPlan::new("uce-sink", concept)).unwrap();
        let profile = delta_profile(&m, &out.model).unwrap();
        assert_eq!(profile.len(), 3 * 3 + 2);
        for p in &profile {
            assert_eq!(p.delta_fro > 0.0, p.block_kind == BlockKind::CrossAttnSink, "{p:?}");
        }
        let other = ModelStack::generate(&GenSpec::new(8, 3, 16, 32, 3)).unwrap();
        assert!(matches!(delta_profile(&m, &other), Err(DiagnosticsError::Structure(_))));
    }

    #[test]
    fn injection_norm_law() {
        let m = stack(4);
        let (same, rec) = inject_deviation(&m, &InjectionSpec::new(1, "W_Q", 0.0)).unwrap();
        assert_eq!(same, m);
        assert_eq!(rec.delta_fro, 0.0);

        let (hit, rec) = inject_deviation(&m, &InjectionSpec::new(2, "W_K", 0.2)).unwrap();
        let expected = 0.2 * rec.pre_norm * 8f64.sqrt();
        assert!((rec.delta_fro - expected).abs() <= 1e-12);
        let actual = fro_norm(&hit.blocks[1].weight("W_K").unwrap().sub(m.blocks[1].weight("W_K").unwrap()).unwrap());
        assert!((actual - expected).abs() <= 1e-12);

        let undo = InjectionSpec { reference_norm: Some(rec.pre_norm), ..InjectionSpec::new(2, "W_K", -0.2) };
        let (back, _) = inject_deviation(&hit, &undo).unwrap();
        assert!(back.blocks[1].weight("W_K").unwrap().max_abs_diff(m.blocks[1].weight("W_K").unwrap()) <= 1e-12);
    }

    #[test]
    fn injection_rejects_non_square_and_unknown() {
        let m = stack(4);
        assert!(matches!(inject_deviation(&m, &InjectionSpec::new(1, "W_1", 0.2)), Err(DiagnosticsError::Param(_))));
        assert!(inject_deviation(&m, &InjectionSpec::new(1, "W_X", 0.2)).is_err());
        assert!(inject_deviation(&m, &InjectionSpec::new(9, "W_Q", 0.2)).is_err());
    }

    #[test]
    fn probe_degradation_cases() {
        let m = stack(5);
        let probes = vec![vec![7, 8, 9], vec![10, 11]];
        assert_eq!(probe_degradation(&m, &m, &probes).unwrap().degradation, 0.0);
        let noop = erase(&m, &EditPlan::new("erasepro", ConceptSpec::single(vec![1, 2], vec![1, 2]))).unwrap();
        assert!(probe_degradation(&noop.model, &m, &probes).unwrap().degradation <= 1e-12);
        let (hurt, _) = inject_deviation(&m, &InjectionSpec::new(1, "W_V", 0.2)).unwrap();
        let r = probe_degradation(&hurt, &m, &probes).unwrap();
        assert!(r.degradation > 0.0);
        assert_eq!(r.per_prompt.len(), 2);
        assert!(probe_degradation(&m, &m, &[]).is_err());
    }
}
