//! One market replication: baseline training, ex-ante valuation with three
//! signals, and ex-post realization by fine-tuning.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::config::{MarketConfig, Mode};
use super::generator::MarketInstance;
use super::stats::{pearson, spearman};
use super::MarketError;
use crate::ckks::{CkksContext, CkksParams, KeySet};
use crate::influence::{
    build_projection, cosine_score, estimate_kfac, group_value, mean_projected_gradient, preconditioned_eval_vector,
    projected_gradient, random_score, refit_head, train, utility_score, Activation, EvalVector, Example, Head, Model,
    ModelSpec, ProjectionOperator, TrainConfig,
};
use crate::protocol::{run_inproc, Broker, Buyer, BuyerConfig, Seller};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Signal {
    #[serde(rename = "IF")]
    Influence,
    #[serde(rename = "Cosine")]
    Cosine,
    #[serde(rename = "Random")]
    Random,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::Influence, Signal::Cosine, Signal::Random];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Influence => "IF",
            Signal::Cosine => "Cosine",
            Signal::Random => "Random",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SellerResult {
    pub seller: usize,
    pub shift: f64,
    pub label_noise: f64,
    pub utility_if: f64,
    pub utility_cos: f64,
    pub utility_rand: f64,
    pub realized_benefit: f64,
}

impl SellerResult {
    pub fn signal(&self, s: Signal) -> f64 {
        match s {
            Signal::Influence => self.utility_if,
            Signal::Cosine => self.utility_cos,
            Signal::Random => self.utility_rand,
        }
    }
}

/// Correlation of one signal with realized benefit; `None` when either
/// side is constant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Correlation {
    pub signal: Signal,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplicationTimings {
    pub train: Duration,
    pub valuation: Duration,
    pub ground_truth: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub sellers: Vec<SellerResult>,
    pub correlations: Vec<Correlation>,
    #[serde(skip)]
    pub timings: ReplicationTimings,
}

impl ReplicationResult {
    pub fn correlation(&self, s: Signal) -> &Correlation {
        self.correlations
            .iter()
            .find(|c| c.signal == s)
            .expect("all signals present")
    }
}

/// Trained buyer model and the head-only valuation machinery.
pub struct Baseline {
    pub model: Model,
    pub projection: ProjectionOperator,
    pub eval_vector: EvalVector,
    pub eval_gradient: Vec<f64>,
}

/// MLP d → hidden (ReLU) → 1 (logistic), with the head re-fit exactly so
/// θ̂ is stationary in the parameters being valued and fine-tuned.
pub fn baseline(cfg: &MarketConfig, inst: &MarketInstance) -> Result<Baseline, MarketError> {
    let spec = ModelSpec {
        widths: vec![cfg.features, cfg.model.hidden, 1],
        activation: Activation::ReLU,
        head: Head::BinaryLogistic,
    };
    let tc = TrainConfig {
        lr: cfg.model.lr,
        epochs: cfg.model.epochs,
        l2: cfg.model.l2,
        seed: inst.seed,
        grad_tol: 1e-9,
    };
    let mut model = train(&spec, &inst.train, &tc)?;
    refit_head(&mut model, &inst.train, 1e-9)?;
    let kfac = estimate_kfac(&model, &inst.train)?;
    let v = &cfg.valuation;
    let projection = build_projection(&kfac, &[(0, 0), (v.k_in, v.k_out)])?;
    let eval_vector = preconditioned_eval_vector(&model, &inst.eval, &projection, &kfac, v.damping)?;
    let eval_gradient = mean_projected_gradient(&model, &projection, &inst.eval)?;
    Ok(Baseline {
        model,
        projection,
        eval_vector,
        eval_gradient,
    })
}

/// Head-only minibatch SGD on `bundle`, then L_eval(θ̂) − L_eval(θ_new).
pub fn realized_benefit(
    cfg: &MarketConfig,
    model: &Model,
    bundle: &[Example],
    eval: &[Example],
    seed: u64,
) -> Result<f64, MarketError> {
    let gt = &cfg.ground_truth;
    let before = model.mean_loss(eval);
    let mut m = model.clone();
    let last = m.layers.len() - 1;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..bundle.len()).collect();
    for _ in 0..gt.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(gt.batch_size) {
            let layer = &m.layers[last];
            let mut gw = layer.weights.clone() * m.l2;
            let mut gb = layer.bias.clone() * m.l2;
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let gf = m.per_example_gradient(&bundle[i])?;
                let (x, delta) = &gf.layers[last];
                gw += delta * x.transpose() * scale;
                gb += delta * scale;
            }
            let layer = &mut m.layers[last];
            layer.weights -= gw * gt.lr;
            layer.bias -= gb * gt.lr;
        }
    }
    Ok(before - m.mean_loss(eval))
}

/// Keys and parameters for encrypted-mode valuation.
pub struct EncryptedValuation<'a> {
    pub params: &'a CkksParams,
    pub keys: &'a KeySet,
}

impl<'a> EncryptedValuation<'a> {
    pub fn keygen(params: &CkksParams, seed: u64) -> Result<KeySet, MarketError> {
        Ok(CkksContext::new(params.clone())?.keygen(seed))
    }
}

fn seller_seed(inst: &MarketInstance, seller: usize, salt: u64) -> u64 {
    inst.seed ^ ((seller as u64 + 1) << 32) ^ salt
}

/// Bundle IF utility: sum of per-point utilities, either in the clear or
/// through a full protocol session.
fn influence_utility(
    base: &Baseline,
    bundle: &[Example],
    enc: Option<&EncryptedValuation>,
    session_seed: u64,
) -> Result<f64, MarketError> {
    match enc {
        None => {
            let scores = bundle
                .iter()
                .map(|z| {
                    utility_score(
                        &base.eval_vector,
                        &projected_gradient(&base.model, &base.projection, z)?,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            let all: Vec<usize> = (0..scores.len()).collect();
            Ok(group_value(&scores, &all)?)
        }
        Some(e) => {
            let buyer = Buyer::setup(BuyerConfig {
                params: e.params.clone(),
                keys: Some(e.keys.clone()),
                key_seed: 0,
                session_seed,
                eval_vector: base.eval_vector.clone(),
                projection_checksum: base.projection.checksum(),
            })?;
            let seller = Seller::from_examples(
                e.params.clone(),
                base.model.clone(),
                base.projection.clone(),
                bundle.to_vec(),
                session_seed.wrapping_add(1),
            )?;
            let report = run_inproc(buyer, seller, Broker::new(e.params.clone())?, false)?;
            let scores = report.scores.utilities();
            let all: Vec<usize> = (0..scores.len()).collect();
            Ok(group_value(&scores, &all)?)
        }
    }
}

pub fn run_replication(
    cfg: &MarketConfig,
    inst: &MarketInstance,
    mode: Mode,
    enc: Option<&EncryptedValuation>,
) -> Result<ReplicationResult, MarketError> {
    if mode == Mode::Encrypted && enc.is_none() {
        return Err(MarketError::InvalidConfig(
            "encrypted mode needs CKKS parameters and keys".into(),
        ));
    }
    let enc = if mode == Mode::Encrypted { enc } else { None };
    let mut timings = ReplicationTimings::default();
    let t = Instant::now();
    let base = baseline(cfg, inst)?;
    timings.train = t.elapsed();

    let mut sellers = Vec::with_capacity(inst.sellers.len());
    for (s, bundle) in inst.sellers.iter().enumerate() {
        let t = Instant::now();
        let utility_if = influence_utility(&base, &bundle.data, enc, seller_seed(inst, s, 0x1f))?;
        let mut cos = Vec::with_capacity(bundle.data.len());
        for z in &bundle.data {
            let g = projected_gradient(&base.model, &base.projection, z)?;
            // A zero gradient carries no direction and contributes nothing.
            cos.push(cosine_score(&g, &base.eval_gradient).unwrap_or(0.0));
        }
        let rand_seed = seller_seed(inst, s, 0x2a);
        let rand: Vec<f64> = (0..bundle.data.len())
            .map(|i| random_score(rand_seed, i as u64))
            .collect();
        let all: Vec<usize> = (0..bundle.data.len()).collect();
        let utility_cos = group_value(&cos, &all)?;
        let utility_rand = group_value(&rand, &all)?;
        timings.valuation += t.elapsed();

        let t = Instant::now();
        let realized = realized_benefit(cfg, &base.model, &bundle.data, &inst.eval, seller_seed(inst, s, 0x3c))?;
        timings.ground_truth += t.elapsed();
        sellers.push(SellerResult {
            seller: s,
            shift: bundle.shift,
            label_noise: bundle.label_noise,
            utility_if,
            utility_cos,
            utility_rand,
            realized_benefit: realized,
        });
    }
    let realized: Vec<f64> = sellers.iter().map(|r| r.realized_benefit).collect();
    let correlations = Signal::ALL
        .iter()
        .map(|&signal| {
            let xs: Vec<f64> = sellers.iter().map(|r| r.signal(signal)).collect();
            Correlation {
                signal,
                pearson: pearson(&xs, &realized).ok(),
                spearman: spearman(&xs, &realized).ok(),
            }
        })
        .collect();
    Ok(ReplicationResult {
        replication: inst.replication,
        sellers,
        correlations,
        timings,
    })
}
