//! Attacking images one at a time and whole campaigns in parallel.

use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sparsepix_core::de::{evolve, PopulationInit};
use sparsepix_core::gsa::anneal;
use sparsepix_core::strmask::{
    binary_mask, init_from_mask, mask_call_cost, strattack, BinaryMask, StrAttackParams,
};
use sparsepix_core::{
    AttackConfig, Bounds, BudgetedModel, EvalError, Image, PixelObjective, PixelPerturbation,
    Scorer, Surrogate,
};
use sparsepix_models::{dataset, weights, LabeledImage, RemoteModel, TinyClassifier};

use crate::config::{AttackSettings, CampaignConfig, DatasetSource, InitMode, Method, ModelSource};
use crate::error::{HarnessError, Result};
use crate::metrics::{compute_metrics, Aggregates, ImageRecord, Status};

/// Surrogate shared by parallel mask generation.
pub type SharedSurrogate<'a> = &'a (dyn Surrogate + Sync);

/// One image's record plus what the report writer needs to draw it.
#[derive(Debug, Clone)]
pub struct ImageResult {
    pub record: ImageRecord,
    pub adversarial: Option<Image>,
    pub perturbation: Option<PixelPerturbation>,
    pub mask: Option<BinaryMask>,
}

#[derive(Debug, Clone)]
pub struct CampaignReport {
    pub results: Vec<ImageResult>,
    pub aggregates: Aggregates,
}

impl CampaignReport {
    pub fn records(&self) -> Vec<ImageRecord> {
        self.results.iter().map(|r| r.record.clone()).collect()
    }

    pub fn is_partial(&self) -> bool {
        self.aggregates.errored > 0
    }
}

fn describe(p: &PixelPerturbation) -> String {
    p.tuples()
        .iter()
        .map(|t| format!("{}:{}:{}:{}:{}", t.x, t.y, t.rgb[0], t.rgb[1], t.rgb[2]))
        .collect::<Vec<_>>()
        .join(";")
}

/// Flat search vector of exactly `n` tuples; short inits repeat their tuples.
fn padded_vector(p: &PixelPerturbation, n: usize) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(HarnessError::config("mask initialization produced no pixels"));
    }
    let tuples = p.tuples().iter().cycle().take(n).cloned().collect();
    Ok(PixelPerturbation::new(tuples, n)?.encode())
}

/// Mask over the structured perturbation of `image` away from `label`.
pub fn generate_mask(
    surrogate: &(dyn Surrogate + Sync),
    image: &Image,
    label: usize,
    params: &StrAttackParams,
) -> Result<BinaryMask> {
    let z = strattack(surrogate, image, label, params)?;
    Ok(binary_mask(&z, params.threshold)?)
}

fn errored(mut record: ImageRecord, calls: u64, message: String) -> ImageResult {
    record.status = Status::Errored;
    record.calls = calls;
    record.error = message;
    ImageResult { record, adversarial: None, perturbation: None, mask: None }
}

/// Attacks one labeled image under a fresh budget. Scoring failures give an
/// errored record; only invalid settings are returned as errors.
pub fn attack_image<S: Scorer + ?Sized>(
    scorer: &S,
    surrogate: Option<SharedSurrogate<'_>>,
    sample: &LabeledImage,
    index: usize,
    settings: &AttackSettings,
) -> Result<ImageResult> {
    let image = &sample.image;
    let mut record = ImageRecord {
        index,
        true_label: sample.label,
        clean_prediction: None,
        status: Status::Skipped,
        calls: 0,
        final_prediction: None,
        mask_charge: 0,
        mask_fallback: false,
        perturbation: String::new(),
        error: String::new(),
    };
    // the clean check is outside the attack budget
    let clean = match scorer.score(image) {
        Ok(s) => s.argmax(),
        Err(e) => return Ok(errored(record, 0, e.to_string())),
    };
    record.clean_prediction = Some(clean);
    if clean != sample.label {
        record.final_prediction = Some(clean);
        return Ok(ImageResult { record, adversarial: None, perturbation: None, mask: None });
    }

    let cfg = AttackConfig::untargeted(sample.label)
        .with_pixels(settings.pixels)
        .with_budget(settings.budget)
        .with_seed(settings.seed.wrapping_add(index as u64));
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = BudgetedModel::new(scorer, settings.budget);
    let bounds = Bounds::for_pixels(image.width(), image.height(), settings.pixels)?;

    let mut mask = None;
    let mut start = None;
    if settings.init == InitMode::Mask {
        let surrogate = surrogate.ok_or_else(|| HarnessError::config("mask initialization needs a surrogate"))?;
        let m = generate_mask(surrogate, image, sample.label, &settings.strattack)?;
        record.mask_charge = model.debit(mask_call_cost(&settings.strattack));
        let init = init_from_mask(image, &m, settings.pixels, &mut rng)?;
        if init.fallback {
            log::warn!("image {index}: empty mask, using uniform positions");
        }
        record.mask_fallback = init.fallback;
        start = Some(padded_vector(&init.perturbation, settings.pixels)?);
        mask = Some(m);
    }

    let mut objective = PixelObjective::new(image, &cfg, model);
    let search = match settings.method {
        Method::Gsa => {
            let init = match start {
                Some(v) => v,
                None => bounds.sample(&mut rng),
            };
            anneal(&mut objective, &bounds, &init, &settings.gsa, &mut rng)
        }
        Method::De => match (start, &mask) {
            (Some(seed), Some(m)) => {
                let mut guide = |r: &mut ChaCha8Rng| {
                    init_from_mask(image, m, settings.pixels, r)
                        .map_err(HarnessError::from)
                        .and_then(|i| padded_vector(&i.perturbation, settings.pixels))
                        .unwrap_or_else(|_| bounds.sample(r))
                };
                let init = PopulationInit::Seeded { seed, guide: Some(&mut guide) };
                evolve(&mut objective, &bounds, &settings.de, init, &mut rng)
            }
            _ => evolve(&mut objective, &bounds, &settings.de, PopulationInit::Uniform, &mut rng),
        },
    };
    let search = match search {
        Ok(s) => s,
        Err(EvalError::Invalid(e)) => return Err(e.into()),
        Err(e) => {
            let calls = objective.model().calls_used();
            let mut result = errored(record, calls, e.to_string());
            result.mask = mask;
            return Ok(result);
        }
    };
    let outcome = objective.into_outcome(&search)?;
    record.status = if outcome.success { Status::Success } else { Status::Failure };
    record.calls = outcome.calls;
    record.final_prediction = Some(outcome.predicted_label.unwrap_or(clean));
    record.perturbation = describe(&outcome.perturbation);
    Ok(ImageResult {
        record,
        adversarial: Some(outcome.adversarial),
        perturbation: Some(outcome.perturbation),
        mask,
    })
}

/// Attacks every image; records come back in image order whatever `jobs` is.
pub fn run_images<S: Scorer + ?Sized>(
    scorer: &S,
    surrogate: Option<SharedSurrogate<'_>>,
    images: &[LabeledImage],
    settings: &AttackSettings,
    jobs: usize,
) -> Result<CampaignReport> {
    settings.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::config(format!("thread pool: {e}")))?;
    let mut results = pool.install(|| {
        images
            .par_iter()
            .enumerate()
            .map(|(i, sample)| attack_image(scorer, surrogate, sample, i, settings))
            .collect::<Result<Vec<_>>>()
    })?;
    results.sort_by_key(|r| r.record.index);
    let records: Vec<ImageRecord> = results.iter().map(|r| r.record.clone()).collect();
    let aggregates = compute_metrics(&records)?;
    Ok(CampaignReport { results, aggregates })
}

/// Model, surrogate and images named by a campaign configuration.
pub struct Loaded {
    pub scorer: Arc<dyn Scorer>,
    pub surrogate: Option<TinyClassifier>,
    pub images: Vec<LabeledImage>,
}

pub fn load(cfg: &CampaignConfig) -> Result<Loaded> {
    cfg.validate()?;
    let (scorer, mut surrogate): (Arc<dyn Scorer>, Option<TinyClassifier>) = match &cfg.model {
        ModelSource::Weights(path) => {
            let model = weights::load(path)?;
            (Arc::new(model.clone()), Some(model))
        }
        ModelSource::Remote { endpoint, timeout_ms, retries } => {
            let remote = RemoteModel::new(endpoint, Duration::from_millis(*timeout_ms), *retries)
                .map_err(|e| HarnessError::config(e.to_string()))?;
            (Arc::new(remote), None)
        }
    };
    if let Some(path) = &cfg.surrogate {
        surrogate = Some(weights::load(path)?);
    }
    let mut images = match &cfg.dataset {
        DatasetSource::Directory(dir) => dataset::import(dir)?,
        DatasetSource::Generated { count, seed } => dataset::generate_shapes(*count, *seed),
    };
    if images.len() < cfg.images {
        log::warn!("dataset has {} images, fewer than the {} requested", images.len(), cfg.images);
    }
    images.truncate(cfg.images);
    if images.is_empty() {
        return Err(HarnessError::config("dataset is empty"));
    }
    Ok(Loaded { scorer, surrogate, images })
}

/// Loads everything named by `cfg` and attacks its images.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport> {
    let loaded = load(cfg)?;
    let surrogate = loaded.surrogate.as_ref().map(|s| s as SharedSurrogate<'_>);
    run_images(loaded.scorer.as_ref(), surrogate, &loaded.images, &cfg.attack, cfg.jobs)
}

/// GSA with random initialization next to GSA with mask initialization.
#[derive(Debug, Clone)]
pub struct AblationReport {
    pub random: CampaignReport,
    pub mask: CampaignReport,
}

pub const RANDOM_ROW: &str = "Random Initialization";
pub const MASK_ROW: &str = "StrAttack Initialization";

pub fn run_ablation_images<S: Scorer + ?Sized>(
    scorer: &S,
    surrogate: SharedSurrogate<'_>,
    images: &[LabeledImage],
    settings: &AttackSettings,
    jobs: usize,
) -> Result<AblationReport> {
    let base = AttackSettings { method: Method::Gsa, ..settings.clone() };
    let random = run_images(scorer, None, images, &AttackSettings { init: InitMode::Random, ..base.clone() }, jobs)?;
    let mask = run_images(scorer, Some(surrogate), images, &AttackSettings { init: InitMode::Mask, ..base }, jobs)?;
    Ok(AblationReport { random, mask })
}

pub fn run_ablation(cfg: &CampaignConfig) -> Result<AblationReport> {
    let mut cfg = cfg.clone();
    cfg.attack.method = Method::Gsa;
    cfg.attack.init = InitMode::Mask;
    let loaded = load(&cfg)?;
    let surrogate = loaded
        .surrogate
        .as_ref()
        .ok_or_else(|| HarnessError::config("ablation needs a surrogate for the mask row"))?;
    run_ablation_images(loaded.scorer.as_ref(), surrogate, &loaded.images, &cfg.attack, cfg.jobs)
}
