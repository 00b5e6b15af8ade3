//! Layer sweeps that apply the closed-form solvers to a whole stack.
//!
//! Every sweep implements [`EraseMethod`] and is looked up by name in a
//! [`MethodRegistry`]. The default registry carries:
//!
//! | name                    | alias               | what it edits                                        |
//! |-------------------------|---------------------|------------------------------------------------------|
//! | `progressive`           | `erasepro`          | every block from `start_layer`, features re-derived through edited blocks |
//! | `progressive_modified`  | `erasepro-modified` | same blocks, features propagated through pretrained blocks |
//! | `erasepro-w`            |                     | `progressive_modified` with 5 tokens from layer 5    |
//! | `erasepro-s`            |                     | `progressive_modified` with 8 tokens from layer 1    |
//! | `sink_only_uce`         | `uce-sink`          | sink `W_K`/`W_V` via the unconstrained solver        |
//! | `sink_only_constrained` | `constrained-sink`  | sink `W_K`/`W_V` via the constrained solver          |
//!
//! Anchor features always come from the pretrained model and are extracted
//! once per call.

use serde::{Deserialize, Serialize};

use crate::diagnostics::feature_distance;
use crate::error::{EraseError, ModelError, SolveError};
use crate::linalg::{fro_norm, matmul, Matrix};
use crate::model::{forward_features, BlockKind, Features, ModelStack};
use crate::report::{EditReport, ReportRow};
use crate::solvers::{ConstrainedSolver, ProjectionSolver, SolverConfig, UceSolver};

/// Prompt variants for one side of a concept pair. A bare id list is one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PromptVariants {
    One(Vec<usize>),
    Many(Vec<Vec<usize>>),
}

impl PromptVariants {
    pub fn variants(&self) -> Vec<Vec<usize>> {
        match self {
            PromptVariants::One(p) => vec![p.clone()],
            PromptVariants::Many(ps) => ps.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptPair {
    pub target: PromptVariants,
    pub anchor: PromptVariants,
}

impl ConceptPair {
    pub fn single(target: Vec<usize>, anchor: Vec<usize>) -> Self {
        Self { target: PromptVariants::One(target), anchor: PromptVariants::One(anchor) }
    }
}

/// Which weights feed the next stage's target features in
/// `progressive_modified`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    #[default]
    Pretrained,
    Edited,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSpec {
    pub pairs: Vec<ConceptPair>,
    pub prompts_per_pair: usize,
    /// Keep only the first `k` token columns of each prompt when solving.
    pub max_tokens: Option<usize>,
    /// First block to edit, 1-based.
    pub start_layer: usize,
}

impl ConceptSpec {
    pub fn new(pairs: Vec<ConceptPair>) -> Self {
        Self { pairs, prompts_per_pair: 1, max_tokens: None, start_layer: 1 }
    }

    pub fn single(target: Vec<usize>, anchor: Vec<usize>) -> Self {
        Self::new(vec![ConceptPair::single(target, anchor)])
    }

    pub fn validate(&self, model: &ModelStack) -> Result<(), EraseError> {
        if self.pairs.is_empty() {
            return Err(EraseError::Config("concept has no target/anchor pairs".into()));
        }
        if self.prompts_per_pair == 0 {
            return Err(EraseError::Config("prompts_per_pair must be at least 1".into()));
        }
        if self.start_layer < 1 || self.start_layer > model.depth() {
            return Err(EraseError::Config(format!(
                "start_layer {} outside 1..={}",
                self.start_layer,
                model.depth()
            )));
        }
        if self.max_tokens == Some(0) {
            return Err(EraseError::Config("max_tokens must be at least 1".into()));
        }
        for (p, pair) in self.pairs.iter().enumerate() {
            for (side, variants) in [("target", pair.target.variants()), ("anchor", pair.anchor.variants())] {
                if variants.len() != 1 && variants.len() != self.prompts_per_pair {
                    return Err(EraseError::Config(format!(
                        "pair {p} has {} {side} prompts, expected 1 or {}",
                        variants.len(),
                        self.prompts_per_pair
                    )));
                }
                for v in &variants {
                    if v.is_empty() {
                        return Err(EraseError::Config(format!("pair {p} has an empty {side} prompt")));
                    }
                    model.check_tokens(v)?;
                }
            }
        }
        Ok(())
    }

    /// Token-aligned (target, anchor) prompt lists. Each target/anchor
    /// variant pair is right-padded with `pad` to a common length.
    pub fn prompts(&self, pad: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut targets = Vec::new();
        let mut anchors = Vec::new();
        for pair in &self.pairs {
            let (tv, av) = (pair.target.variants(), pair.anchor.variants());
            let count = tv.len().max(av.len());
            for k in 0..count {
                let mut t = tv[k.min(tv.len() - 1)].clone();
                let mut a = av[k.min(av.len() - 1)].clone();
                let len = t.len().max(a.len());
                t.resize(len, pad);
                a.resize(len, pad);
                targets.push(t);
                anchors.push(a);
            }
        }
        (targets, anchors)
    }

    /// Applies `max_tokens` to a token-aligned stage.
    pub fn select(&self, features: &Features) -> Result<Matrix, EraseError> {
        match self.max_tokens {
            Some(k) if features.token_aligned => Ok(features
                .truncate_segments(k)
                .map_err(|e| EraseError::Internal(e.to_string()))?
                .matrix),
            _ => Ok(features.matrix.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditPlan {
    /// Registered method name or alias.
    pub method: String,
    pub solver_cfg: SolverConfig,
    pub concept: ConceptSpec,
    /// Only read by `progressive_modified`.
    pub propagation: Propagation,
}

impl EditPlan {
    pub fn new(method: impl Into<String>, concept: ConceptSpec) -> Self {
        Self { method: method.into(), solver_cfg: SolverConfig::default(), concept, propagation: Propagation::default() }
    }
}

/// `{pairs, prompts_per_pair, max_tokens?, start_layer?, method?, tolerances?, propagation?}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptConfig {
    pub pairs: Vec<ConceptPair>,
    #[serde(default = "one")]
    pub prompts_per_pair: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_layer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<Propagation>,
}

fn one() -> usize {
    1
}

impl ConceptConfig {
    pub fn from_json(text: &str) -> Result<Self, EraseError> {
        serde_json::from_str(text).map_err(|e| {
            EraseError::Config(format!("concept config line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn concept(&self) -> ConceptSpec {
        ConceptSpec {
            pairs: self.pairs.clone(),
            prompts_per_pair: self.prompts_per_pair,
            max_tokens: self.max_tokens,
            start_layer: self.start_layer.unwrap_or(1),
        }
    }

    /// Builds a plan; `method_override` wins over the file's `method`.
    pub fn plan(&self, method_override: Option<&str>) -> Result<EditPlan, EraseError> {
        let method = method_override
            .map(str::to_string)
            .or_else(|| self.method.clone())
            .ok_or_else(|| EraseError::Config("no erase method given".into()))?;
        let solver_cfg = self.tolerances.unwrap_or_default();
        solver_cfg.validate().map_err(|e| EraseError::Config(e.to_string()))?;
        Ok(EditPlan {
            method,
            solver_cfg,
            concept: self.concept(),
            propagation: self.propagation.unwrap_or_default(),
        })
    }
}

/// Edited model plus its per-projection report.
#[derive(Debug, Clone, PartialEq)]
pub struct ErasureOutcome {
    pub model: ModelStack,
    pub report: EditReport,
}

/// A whole-model erasure procedure.
pub trait EraseMethod: Send + Sync {
    fn name(&self) -> &'static str;

    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }

    fn erase(&self, model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError>;
}

/// Shallow-to-deep sweep with the constrained solver.
#[derive(Debug, Clone, Copy)]
pub struct Progressive;

/// Shallow-to-deep sweep whose target features ignore earlier edits.
#[derive(Debug, Clone, Copy)]
pub struct ProgressiveModified;

/// [`ProgressiveModified`] with a fixed token budget and start layer.
#[derive(Debug, Clone, Copy)]
pub struct ImplicitPreset {
    pub name: &'static str,
    pub max_tokens: usize,
    pub start_layer: usize,
}

/// Weak implicit-concept preset: first five tokens, editing from layer 5.
pub const ERASEPRO_W: ImplicitPreset = ImplicitPreset { name: "erasepro-w", max_tokens: 5, start_layer: 5 };
/// Strong implicit-concept preset: first eight tokens, editing from layer 1.
pub const ERASEPRO_S: ImplicitPreset = ImplicitPreset { name: "erasepro-s", max_tokens: 8, start_layer: 1 };

/// Edits only the sink's key/value projections.
pub struct SinkOnly {
    name: &'static str,
    alias: &'static [&'static str],
    solver: Box<dyn ProjectionSolver>,
}

impl SinkOnly {
    pub fn uce() -> Self {
        Self { name: "sink_only_uce", alias: &["uce-sink"], solver: Box::new(UceSolver) }
    }

    pub fn constrained() -> Self {
        Self { name: "sink_only_constrained", alias: &["constrained-sink"], solver: Box::new(ConstrainedSolver) }
    }
}

impl EraseMethod for Progressive {
    fn name(&self) -> &'static str {
        "progressive"
    }

    fn aliases(&self) -> &'static [&'static str] {
        &["erasepro"]
    }

    fn erase(&self, model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError> {
        sweep(model, plan, &plan.concept, Propagation::Edited, self.name())
    }
}

impl EraseMethod for ProgressiveModified {
    fn name(&self) -> &'static str {
        "progressive_modified"
    }

    fn aliases(&self) -> &'static [&'static str] {
        &["erasepro-modified"]
    }

    fn erase(&self, model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError> {
        sweep(model, plan, &plan.concept, plan.propagation, self.name())
    }
}

impl EraseMethod for ImplicitPreset {
    fn name(&self) -> &'static str {
        self.name
    }

    fn erase(&self, model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError> {
        let concept = ConceptSpec { max_tokens: Some(self.max_tokens), start_layer: self.start_layer, ..plan.concept.clone() };
        sweep(model, plan, &concept, plan.propagation, self.name)
    }
}

impl EraseMethod for SinkOnly {
    fn name(&self) -> &'static str {
        self.name
    }

    fn aliases(&self) -> &'static [&'static str] {
        self.alias
    }

    fn erase(&self, model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError> {
        let concept = &plan.concept;
        concept.validate(model)?;
        if !model.has_sink() {
            return Err(EraseError::Config(format!("{} needs a model ending in a cross_attn_sink", self.name)));
        }
        let layer = model.depth();
        let (targets, anchors) = concept.prompts(model.pad_token_id);
        let target_trace = model.extract_features(&targets)?;
        let anchor_trace = model.extract_features(&anchors)?;
        let x = concept.select(target_trace.stage(layer - 1))?;
        let y = concept.select(anchor_trace.stage(layer - 1))?;

        let mut edited = model.clone();
        let mut rows = Vec::new();
        for (name, w_o) in model.blocks[layer - 1].editable() {
            let (w_star, row) = solve_projection(self.solver.as_ref(), layer, BlockKind::CrossAttnSink, name, w_o, &x, &y, &plan.solver_cfg)?;
            edited.blocks[layer - 1].set_weight(name, w_star)?;
            rows.push(row);
        }
        let out = forward_features(&edited.blocks[layer - 1], target_trace.stage(layer - 1)).map_err(ModelError::from)?;
        let (dist_fro, angle) = feature_distance(&out.matrix, &anchor_trace.stage(layer).matrix)
            .map_err(|e| EraseError::Internal(e.to_string()))?;
        for row in &mut rows {
            row.dist_fro = Some(dist_fro);
            row.dist_angular_deg = Some(angle);
        }
        Ok(ErasureOutcome { model: edited, report: EditReport::new(rows, self.name, model.seed) })
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_projection(
    solver: &dyn ProjectionSolver,
    layer: usize,
    kind: BlockKind,
    name: &str,
    w_o: &Matrix,
    x: &Matrix,
    y: &Matrix,
    cfg: &SolverConfig,
) -> Result<(Matrix, ReportRow), EraseError> {
    let wrap = |source: SolveError| EraseError::Solve { layer, projection: name.to_string(), source };
    let result = solver.solve(w_o, x, y, cfg).map_err(wrap)?;
    let anchor = matmul(w_o, y).map_err(|e| wrap(e.into()))?;
    let residual_pre = fro_norm(&matmul(w_o, x).and_then(|wx| wx.sub(&anchor)).map_err(|e| wrap(e.into()))?);
    if solver.enforces_constraint() && cfg.ridge_eps == 0.0 {
        let bound = cfg.constraint_bound(fro_norm(&anchor));
        if result.residual_fro > bound {
            return Err(wrap(SolveError::ConstraintViolated { residual: result.residual_fro, bound }));
        }
    }
    let row = ReportRow {
        layer_index: layer,
        block_kind: kind.as_str().to_string(),
        projection: name.to_string(),
        delta_fro: Some(result.delta_fro),
        delta_rel: Some(relative(result.delta_fro, fro_norm(w_o))),
        residual_pre: Some(residual_pre),
        residual_post: Some(result.residual_fro),
        dist_fro: None,
        dist_angular_deg: None,
    };
    Ok((result.w_star, row))
}

pub(crate) fn relative(value: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        if value == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        value / scale
    }
}

/// Shared body of the progressive methods. `propagation` picks which weights
/// carry target features from stage `i-1` to stage `i`.
fn sweep(
    model: &ModelStack,
    plan: &EditPlan,
    concept: &ConceptSpec,
    propagation: Propagation,
    method: &str,
) -> Result<ErasureOutcome, EraseError> {
    concept.validate(model)?;
    let (targets, anchors) = concept.prompts(model.pad_token_id);
    let anchor_trace = model.extract_features(&anchors)?;
    let solver = ConstrainedSolver;

    let mut edited = model.clone();
    let mut x = model.embed(&targets)?;
    let mut rows = Vec::new();
    for layer in 1..=model.depth() {
        let pretrained = &model.blocks[layer - 1];
        let y_prev = anchor_trace.stage(layer - 1);
        if x.segments != y_prev.segments {
            return Err(EraseError::Internal(format!(
                "stage {} target segments {:?} differ from anchor segments {:?}",
                layer - 1,
                x.segments,
                y_prev.segments
            )));
        }
        let first_row = rows.len();
        if layer >= concept.start_layer {
            let xs = concept.select(&x)?;
            let ys = concept.select(y_prev)?;
            for (name, w_o) in pretrained.editable() {
                let (w_star, row) = solve_projection(&solver, layer, pretrained.kind(), name, w_o, &xs, &ys, &plan.solver_cfg)?;
                edited.blocks[layer - 1].set_weight(name, w_star)?;
                rows.push(row);
            }
        }
        let carrier = match propagation {
            Propagation::Edited => &edited.blocks[layer - 1],
            Propagation::Pretrained => pretrained,
        };
        x = forward_features(carrier, &x).map_err(ModelError::from)?;
        let (dist_fro, angle) = feature_distance(&x.matrix, &anchor_trace.stage(layer).matrix)
            .map_err(|e| EraseError::Internal(e.to_string()))?;
        for row in &mut rows[first_row..] {
            row.dist_fro = Some(dist_fro);
            row.dist_angular_deg = Some(angle);
        }
    }
    Ok(ErasureOutcome { model: edited, report: EditReport::new(rows, method, model.seed) })
}

/// Name-keyed collection of erase methods.
pub struct MethodRegistry {
    methods: Vec<Box<dyn EraseMethod>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Progressive));
        r.register(Box::new(ProgressiveModified));
        r.register(Box::new(ERASEPRO_W));
        r.register(Box::new(ERASEPRO_S));
        r.register(Box::new(SinkOnly::uce()));
        r.register(Box::new(SinkOnly::constrained()));
        r
    }
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self { methods: Vec::new() }
    }

    /// Adds a method; a later registration shadows an earlier one of the same name.
    pub fn register(&mut self, method: Box<dyn EraseMethod>) {
        self.methods.retain(|m| m.name() != method.name());
        self.methods.push(method);
    }

    pub fn get(&self, name: &str) -> Option<&dyn EraseMethod> {
        self.methods
            .iter()
            .find(|m| m.name() == name || m.aliases().contains(&name))
            .map(|m| m.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }

    /// Resolves `plan.method` and runs it.
    pub fn run(&self, model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError> {
        let method = self.get(&plan.method).ok_or_else(|| {
            let known: Vec<String> = self
                .methods
                .iter()
                .flat_map(|m| std::iter::once(m.name()).chain(m.aliases().iter().copied()))
                .map(str::to_string)
                .collect();
            EraseError::Config(format!("unknown method '{}' (known: {})", plan.method, known.join(", ")))
        })?;
        method.erase(model, plan)
    }
}

/// Runs `plan` with the default registry.
pub fn erase(model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError> {
    MethodRegistry::default().run(model, plan)
}

pub fn progressive_erase(model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError> {
    Progressive.erase(model, plan)
}

pub fn progressive_erase_modified(model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError> {
    ProgressiveModified.erase(model, plan)
}

/// Dispatches to the UCE or constrained sink edit according to `plan.method`.
pub fn sink_only_edit(model: &ModelStack, plan: &EditPlan) -> Result<ErasureOutcome, EraseError> {
    match plan.method.as_str() {
        "sink_only_uce" | "uce-sink" => SinkOnly::uce().erase(model, plan),
        "sink_only_constrained" | "constrained-sink" => SinkOnly::constrained().erase(model, plan),
        other => Err(EraseError::Config(format!("'{other}' is not a sink-only method"))),
    }
}
