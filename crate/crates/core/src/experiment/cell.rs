//! One (source, target) adaptation cell: split, scale, train both models,
//! evaluate on the labeled target split and measure domain separability.

use crate::data::{fit_scaler, make_splits, Dataset, SplitData, SplitPlan, StandardScaler};
use crate::domain::Domain;
use crate::embed::{stratified_subsample, tsne, Embedding2D, TsneConfig};
use crate::error::Result;
use crate::models::{BaselineMlp, Classifier, DannModel};
use crate::train::{evaluate, feature_dca, train_baseline, train_dann, History, MetricsReport, TrainConfig, TrainData};

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub plan: SplitPlan,
    pub scaler: StandardScaler,
    /// The four splits after scaling.
    pub split: SplitData,
    pub baseline: BaselineMlp,
    pub dann: DannModel,
    pub baseline_history: History,
    pub dann_history: History,
    pub baseline_report: MetricsReport,
    pub dann_report: MetricsReport,
    /// Separability of the baseline representation (before adaptation).
    pub dca_before: f64,
    /// Separability of the adapted representation.
    pub dca_after: f64,
}

fn scale_splits(split: SplitData, scaler: &StandardScaler) -> Result<SplitData> {
    Ok(SplitData {
        source_train: scaler.transform(&split.source_train)?,
        source_val: scaler.transform(&split.source_val)?,
        target_unlabeled: scaler.transform(&split.target_unlabeled)?,
        target_eval: scaler.transform(&split.target_eval)?,
    })
}

/// Runs the full protocol for one cell with `cfg.seed` driving the splits,
/// initialization, training and probes.
///
/// The scaler is fitted on the source training split only. Both models are
/// evaluated on the labeled target split, which never reaches an optimizer.
/// DCA compares source validation rows with target evaluation rows after
/// matching their class counts.
pub fn adapt_and_evaluate(source: &Dataset, target: &Dataset, cfg: &TrainConfig) -> Result<CellOutcome> {
    let plan = make_splits(source, target, cfg.seed)?;
    let raw = plan.apply(source, target);
    let scaler = fit_scaler(&raw.source_train)?;
    let split = scale_splits(raw, &scaler)?;
    let data = TrainData::from_splits(&split);

    let (mut baseline, baseline_history) = train_baseline(&data, cfg)?;
    let (mut dann, dann_history) = train_dann(&data, cfg)?;
    let baseline_report = evaluate(&mut baseline, &split.target_eval)?;
    let dann_report = evaluate(&mut dann, &split.target_eval)?;
    let dca_before = feature_dca(&mut baseline, &split.source_val, &split.target_eval, cfg.seed)?;
    let dca_after = feature_dca(&mut dann, &split.source_val, &split.target_eval, cfg.seed)?;
    Ok(CellOutcome {
        plan,
        scaler,
        split,
        baseline,
        dann,
        baseline_history,
        dann_history,
        baseline_report,
        dann_report,
        dca_before,
        dca_after,
    })
}

/// Evaluation rows of both domains, stacked source first, with their labels
/// and domain tags.
pub fn pooled_eval_rows(split: &SplitData) -> Result<(Dataset, Vec<Domain>)> {
    let s = &split.source_val;
    let t = &split.target_eval;
    let features = s.features.vstack(&t.features)?;
    let labels = s.labels.iter().chain(&t.labels).copied().collect();
    let domains = std::iter::repeat_n(s.domain, s.len())
        .chain(std::iter::repeat_n(t.domain, t.len()))
        .collect();
    let ds = Dataset::new(s.feature_names.clone(), features, labels, s.domain, s.band)?;
    Ok((ds, domains))
}

/// t-SNE of a model's representation over a stratified subsample of the
/// pooled evaluation rows. The perplexity is lowered, with a warning, when
/// the subsample is too small for the configured value.
pub fn embed_representation<M: Classifier + ?Sized>(
    model: &mut M,
    split: &SplitData,
    per_group: usize,
    tsne_cfg: &TsneConfig,
) -> Result<Embedding2D> {
    let (pooled, domains) = pooled_eval_rows(split)?;
    let picked = stratified_subsample(&pooled.labels, &domains, per_group, tsne_cfg.seed);
    let sub = pooled.subset(&picked);
    let features = model.extract_features(&sub.features)?;
    let limit = (sub.len() as f64 - 1.0) / 3.0;
    let mut cfg = tsne_cfg.clone();
    if cfg.perplexity >= limit {
        cfg.perplexity = (limit - 1.0).max(1.0);
        log::warn!(
            "{} rows are too few for perplexity {}; using {}",
            sub.len(),
            tsne_cfg.perplexity,
            cfg.perplexity
        );
    }
    let out = tsne(&features, &cfg)?;
    Embedding2D::new(
        out.points,
        sub.labels,
        picked.iter().map(|&i| domains[i]).collect(),
        out.kl_trace,
    )
}
