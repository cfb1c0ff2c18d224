//! Two-sided model interoperability across vendors.
//!
//! - Dataset exchange: a UE-side encoder exports `{target CSI, feedback}`
//!   records; the network side trains its own decoder on them.
//! - Reference-decoder flow: a UE vendor trains an encoder against a fixed
//!   reference decoder.
//! - Multi-vendor decoding: one decoder serves several encoders, selected by
//!   a vendor index.
//! - Reference derivation: candidate `(L, B)` configurations are scored on
//!   accuracy, complexity and robustness and the best feasible one becomes
//!   the reference model.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{dft_codebook, generate_trace, ChannelRegime, RegimeSchedule, TraceConfig};
use crate::container::{Container, KIND_DATASET};
use crate::kpi::sgcs;
use crate::linalg::{ridge_fit_c, ridge_lambda, CMat, CVec};
use crate::models::autoencoder::{
    decoder_package, encoder_package, quant_param, quantizer_of, samples_matrix,
};
use crate::models::{
    content_id, decode_csi, encode_csi, train_autoencoder_joint, AutoencoderConfig, Feedback, ModelDescriptor,
    ModelIdentity, ModelKind, ModelPackage, Param, ParamValue, Quantizer,
};
use crate::registry::verify_pairing;
use crate::{rng, Error, Precoder, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub target_csi: Precoder,
    pub feedback: Feedback,
    pub vendor_index: Option<u32>,
}

/// Exchanged `{target CSI, feedback}` dataset with the quantiser needed to
/// interpret its feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub associated_id: String,
    pub quantizer: Quantizer,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.quantizer.ranges.len()
    }

    pub fn vendor_index(&self) -> Option<u32> {
        self.records.first().and_then(|r| r.vendor_index)
    }

    /// Tags every record with `index`.
    pub fn with_vendor_index(mut self, index: u32) -> Self {
        for r in &mut self.records {
            r.vendor_index = Some(index);
        }
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut c = Container::new(KIND_DATASET);
        c.push("associated_id", &self.associated_id);
        c.push("records", self.records.len());
        let n = self.records.first().map_or(0, |r| r.target_csi.len());
        c.push("input_dim", n);
        c.push("latent_dim", self.latent_dim());
        c.push("bits_per_dim", self.quantizer.bits);
        let s = self.records.len();
        let mut targets = CMat::zeros(s, n);
        for (i, r) in self.records.iter().enumerate() {
            if r.target_csi.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: r.target_csi.len() });
            }
            targets.set_row(i, &r.target_csi.as_vector().transpose());
        }
        c.params.push(Param::complex("targets", targets));
        if self.quantizer.bits == 0 {
            let l = self.latent_dim();
            let mut fb = CMat::zeros(s, l);
            for (i, r) in self.records.iter().enumerate() {
                let Feedback::Latent(z) = &r.feedback else {
                    return Err(Error::invalid("unquantised dataset holds bit feedback"));
                };
                if z.len() != l {
                    return Err(Error::DimensionMismatch { expected: l, actual: z.len() });
                }
                for (j, v) in z.iter().enumerate() {
                    fb[(i, j)] = *v;
                }
            }
            c.params.push(Param::complex("feedback", fb));
        } else {
            let f = self.quantizer.feedback_bits();
            let mut fb = DMatrix::zeros(s, f);
            for (i, r) in self.records.iter().enumerate() {
                let Feedback::Bits(b) = &r.feedback else {
                    return Err(Error::invalid("quantised dataset holds latent feedback"));
                };
                if b.len() != f {
                    return Err(Error::DimensionMismatch { expected: f, actual: b.len() });
                }
                for (j, v) in b.iter().enumerate() {
                    fb[(i, j)] = *v as f64;
                }
            }
            c.params.push(Param::real("feedback", fb));
        }
        if self.vendor_index().is_some() {
            let v: Vec<f64> = self.records.iter().map(|r| r.vendor_index.unwrap_or(u32::MAX) as f64).collect();
            c.params.push(Param::real("vendor_index", DMatrix::from_row_slice(1, s, &v)));
        }
        c.params.push(quant_param(std::slice::from_ref(&self.quantizer)));
        Ok(c.encode())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = Container::decode(bytes)?;
        if c.kind() != KIND_DATASET {
            return Err(Error::Format(format!("expected DSET container, found {:?}", c.kind())));
        }
        let quant = match c.param("meta.quant")? {
            ParamValue::Real(m) => Quantizer::from_row(&m.row(0).iter().copied().collect::<Vec<_>>())?,
            _ => return Err(Error::Format("meta.quant must be real".into())),
        };
        let ParamValue::Complex(targets) = c.param("targets")? else {
            return Err(Error::Format("targets must be complex".into()));
        };
        let vendors = match c.param("vendor_index") {
            Ok(ParamValue::Real(v)) => Some(v.clone()),
            Ok(_) => return Err(Error::Format("vendor_index must be real".into())),
            Err(_) => None,
        };
        let mut records = Vec::with_capacity(targets.nrows());
        for i in 0..targets.nrows() {
            let feedback = match c.param("feedback")? {
                ParamValue::Complex(m) => Feedback::Latent(m.row(i).iter().copied().collect()),
                ParamValue::Real(m) => Feedback::Bits(m.row(i).iter().map(|&v| v as u8).collect()),
            };
            records.push(DatasetRecord {
                target_csi: Precoder::new(targets.row(i).transpose())?,
                feedback,
                vendor_index: vendors.as_ref().map(|v| v[i] as u32),
            });
        }
        Ok(Dataset { associated_id: c.require("associated_id")?.to_string(), quantizer: quant, records })
    }
}

/// One record per target, with the encoder's feedback. The dataset inherits
/// the encoder's associated ID.
pub fn export_dataset(encoder: &ModelPackage, targets: &[Precoder]) -> Result<Dataset> {
    encoder.expect_kind(ModelKind::CsiEncoder)?;
    let associated_id = encoder
        .descriptor
        .associated_id
        .clone()
        .ok_or_else(|| Error::Pairing("encoder lacks an associated ID".into()))?;
    let records = targets
        .iter()
        .map(|t| Ok(DatasetRecord { target_csi: t.clone(), feedback: encode_csi(encoder, t)?, vendor_index: None }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { associated_id, quantizer: quantizer_of(encoder, 0)?, records })
}

fn latents_and_targets(ds: &Dataset) -> Result<(CMat, CMat)> {
    let l = ds.latent_dim();
    let n = ds.records[0].target_csi.len();
    let mut z = CMat::zeros(l, ds.len());
    let mut w = CMat::zeros(n, ds.len());
    for (s, r) in ds.records.iter().enumerate() {
        let latent = latent_from(&ds.quantizer, &r.feedback)?;
        z.set_column(s, &latent);
        if r.target_csi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: r.target_csi.len() });
        }
        w.set_column(s, r.target_csi.as_vector());
    }
    Ok((z, w))
}

fn latent_from(q: &Quantizer, fb: &Feedback) -> Result<CVec> {
    match fb {
        Feedback::Latent(z) if q.bits == 0 && z.len() == q.ranges.len() => Ok(CVec::from_column_slice(z)),
        Feedback::Bits(b) if q.bits > 0 => q.decode(b),
        _ => Err(Error::invalid("feedback does not match the dataset quantiser")),
    }
}

/// Network-side decoder trained by regularised least squares from
/// (dequantised) feedback to target CSI. All parts must share one associated
/// ID and quantiser and carry no vendor index.
pub fn train_decoder_from_dataset(parts: &[Dataset], identity: ModelIdentity) -> Result<ModelPackage> {
    let first = parts.iter().find(|d| !d.is_empty()).ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    for d in parts {
        if d.associated_id != first.associated_id {
            return Err(Error::Pairing(format!(
                "mixed associated IDs {} and {}",
                first.associated_id, d.associated_id
            )));
        }
        if d.quantizer != first.quantizer {
            return Err(Error::invalid("dataset parts use different quantisers"));
        }
        if d.vendor_index().is_some() {
            return Err(Error::invalid("vendor-indexed dataset; use train_multivendor_decoder"));
        }
    }
    let mut zs = Vec::new();
    let mut ws = Vec::new();
    for d in parts.iter().filter(|d| !d.is_empty()) {
        let (z, w) = latents_and_targets(d)?;
        zs.push(z);
        ws.push(w);
    }
    let z = hcat(&zs);
    let w = hcat(&ws);
    let basis = ridge_fit_c(&z, &w)?;
    Ok(decoder_package(identity, basis, &first.quantizer, Some(first.associated_id.clone())))
}

fn hcat(ms: &[CMat]) -> CMat {
    let rows = ms[0].nrows();
    let cols: usize = ms.iter().map(|m| m.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut c = 0;
    for m in ms {
        out.columns_mut(c, m.ncols()).copy_from(m);
        c += m.ncols();
    }
    out
}

/// Encoder minimising `sum |w - D E w|^2` through the frozen reference
/// decoder `D`:
/// `E = (D^H D + a I)^-1 D^H G (G + b I)^-1` with `G = sum w w^H`.
pub fn train_encoder_against_reference(
    reference_decoder: &ModelPackage,
    targets: &[Precoder],
    identity: ModelIdentity,
) -> Result<ModelPackage> {
    reference_decoder.expect_kind(ModelKind::CsiDecoder)?;
    if reference_decoder.param("meta.vendors").is_ok() {
        return Err(Error::invalid("reference decoder must be single-vendor"));
    }
    if targets.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let d = reference_decoder.complex("basis")?;
    let x = samples_matrix(targets)?;
    if x.nrows() != d.nrows() {
        return Err(Error::DimensionMismatch { expected: d.nrows(), actual: x.nrows() });
    }
    let mut dhd = d.adjoint() * d;
    let a = ridge_lambda(dhd.trace().re, dhd.nrows());
    for i in 0..dhd.nrows() {
        dhd[(i, i)] += Complex64::new(a, 0.0);
    }
    let mut g = &x * x.adjoint();
    let b = ridge_lambda(g.trace().re, g.nrows());
    for i in 0..g.nrows() {
        g[(i, i)] += Complex64::new(b, 0.0);
    }
    let left = dhd.cholesky().ok_or(Error::Degenerate("reference decoder Gram matrix"))?.solve(&d.adjoint());
    // E = left * G0 * G^-1 with G0 the unregularised Gram.
    let g0 = &x * x.adjoint();
    let g_chol = g.cholesky().ok_or(Error::Degenerate("target Gram matrix"))?;
    // (left G0) G^-1 = (G^-H (left G0)^H)^H; G is Hermitian.
    let e = g_chol.solve(&(left * g0).adjoint()).adjoint();
    let quantizer = quantizer_of(reference_decoder, 0)?;
    Ok(encoder_package(identity, e, &quantizer, reference_decoder.descriptor.associated_id.clone()))
}

/// One decoder over the aggregate of vendor-indexed datasets. Its input is
/// the Kronecker product of the one-hot vendor index and the feedback, i.e.
/// the feedback placed in the vendor's block of an otherwise zero vector.
pub fn train_multivendor_decoder(datasets: &[Dataset], identity: ModelIdentity) -> Result<ModelPackage> {
    if datasets.len() < 2 {
        return Err(Error::invalid("multi-vendor training needs at least two datasets"));
    }
    let mut vendors = Vec::new();
    for d in datasets {
        if d.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let v = d.vendor_index().ok_or_else(|| Error::invalid("dataset lacks a vendor index"))?;
        if d.records.iter().any(|r| r.vendor_index != Some(v)) {
            return Err(Error::invalid("dataset mixes vendor indices"));
        }
        if vendors.contains(&v) {
            return Err(Error::Duplicate(format!("vendor index {v}")));
        }
        vendors.push(v);
    }
    let l = datasets[0].latent_dim();
    if let Some(d) = datasets.iter().find(|d| d.latent_dim() != l) {
        return Err(Error::DimensionMismatch { expected: l, actual: d.latent_dim() });
    }
    let count = datasets.len();
    let dim = count * l;
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for (slot, d) in datasets.iter().enumerate() {
        let (z, w) = latents_and_targets(d)?;
        let mut x = CMat::zeros(dim, z.ncols());
        x.view_mut((slot * l, 0), (l, z.ncols())).copy_from(&z);
        xs.push(x);
        ws.push(w);
    }
    let basis = ridge_fit_c(&hcat(&xs), &hcat(&ws))?;
    let quantizers: Vec<Quantizer> = datasets.iter().map(|d| d.quantizer.clone()).collect();
    let source_ids: Vec<String> = datasets.iter().map(|d| d.associated_id.clone()).collect();
    let mut desc = ModelDescriptor::new(identity);
    let id_bytes: Vec<&[u8]> = source_ids.iter().map(|s| s.as_bytes()).collect();
    desc.associated_id = Some(content_id("aid", &id_bytes));
    desc.source_ids = source_ids;
    let vendor_row = DMatrix::from_iterator(1, count, vendors.iter().map(|&v| v as f64));
    Ok(ModelPackage::sealed(
        desc,
        ModelKind::CsiDecoder,
        vec![Param::complex("basis", basis), quant_param(&quantizers), Param::real("meta.vendors", vendor_row)],
    ))
}

/// Encodes and decodes `target` after checking that the pair shares an
/// associated ID.
pub fn infer_two_sided(encoder: &ModelPackage, decoder: &ModelPackage, target: &Precoder) -> Result<Precoder> {
    if !verify_pairing(&encoder.descriptor, &decoder.descriptor)? {
        return Err(Error::Pairing(format!(
            "{} and {} were not trained against the same reference",
            encoder.key(),
            decoder.key()
        )));
    }
    decode_csi(decoder, &encode_csi(encoder, target)?)
}

pub fn mean_reconstruction_sgcs(encoder: &ModelPackage, decoder: &ModelPackage, targets: &[Precoder]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for t in targets {
        total += sgcs(&decode_csi(decoder, &encode_csi(encoder, t)?)?, t)?;
    }
    Ok(total / targets.len() as f64)
}

/// Mean SGCS of every encoder/decoder combination, ignoring pairing IDs.
/// Incompatible combinations are `None`.
pub fn cross_pairing_matrix(
    encoders: &[ModelPackage],
    decoders: &[ModelPackage],
    targets: &[Precoder],
) -> Vec<Vec<Option<f64>>> {
    encoders
        .iter()
        .map(|e| decoders.iter().map(|d| mean_reconstruction_sgcs(e, d, targets).ok()).collect())
        .collect()
}

/// Mean SGCS for one vendor through a multi-vendor decoder.
pub fn mean_indexed_sgcs(encoder: &ModelPackage, decoder: &ModelPackage, vendor: u32, targets: &[Precoder]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for t in targets {
        let out = crate::models::decode_csi_indexed(decoder, vendor, &encode_csi(encoder, t)?)?;
        total += sgcs(&out, t)?;
    }
    Ok(total / targets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    ReferenceModel,
    ReferenceDataset,
    ParameterSet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArtifactPayload {
    Model(ModelPackage),
    Dataset(Dataset),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceArtifact {
    pub kind: ArtifactKind,
    pub associated_id: String,
    pub payload: ArtifactPayload,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalCriteria {
    pub sgcs_floor: f64,
    pub flops_budget: u64,
    pub storage_budget_bytes: u64,
    /// Minimum mean SGCS when the reference decoder is paired with encoders
    /// trained on perturbed data.
    pub robustness_floor: f64,
}

impl EvalCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.sgcs_floor > 0.0 && self.robustness_floor > 0.0 && self.flops_budget > 0 && self.storage_budget_bytes > 0) {
            return Err(Error::invalid("evaluation criteria must all be positive"));
        }
        Ok(())
    }
}

/// Simulation setup for reference derivation: one regime, a training split
/// and a held-out evaluation split from the same trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSetup {
    pub num_tx_antennas: usize,
    pub regime: ChannelRegime,
    pub train_slots: usize,
    pub eval_slots: usize,
    /// Doppler scale factors of the robustness perturbations.
    pub perturbations: Vec<f64>,
}

impl ReferenceSetup {
    pub fn new(num_tx_antennas: usize, regime: ChannelRegime, train_slots: usize, eval_slots: usize) -> Self {
        ReferenceSetup { num_tx_antennas, regime, train_slots, eval_slots, perturbations: vec![0.5, 1.5] }
    }

    /// `(train, eval)` targets under `doppler_scale`. The site is shared by
    /// all perturbations; gains use a stream per scale.
    pub fn targets(&self, doppler_scale: f64, seed: u64) -> Result<(Vec<Precoder>, Vec<Precoder>)> {
        let mut regime = self.regime.clone();
        regime.doppler_norm *= doppler_scale;
        let total = (self.train_slots + self.eval_slots) as u64;
        let gain_seed = if doppler_scale == 1.0 {
            seed
        } else {
            rng::derive_seed(seed, &format!("perturb-{doppler_scale:?}"))
        };
        let cfg = TraceConfig::new(
            RegimeSchedule::constant(regime),
            total,
            self.num_tx_antennas,
            dft_codebook(self.num_tx_antennas),
            gain_seed,
        )
        .with_site_seed(seed);
        let mut all = generate_trace(&cfg)?.true_precoders();
        let eval = all.split_off(self.train_slots);
        Ok((all, eval))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub index: usize,
    pub backbone: &'static str,
    pub latent_dim: usize,
    pub bits_per_dim: u32,
    pub mean_sgcs: f64,
    pub flops: u64,
    pub storage_bytes: u64,
    pub robustness: f64,
    pub violations: Vec<&'static str>,
}

impl CandidateScore {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceReport {
    pub scores: Vec<CandidateScore>,
    pub selected: Option<usize>,
}

impl ReferenceReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from("reference derivation report\n");
        for c in &self.scores {
            let _ = writeln!(
                s,
                "candidate={} backbone={} latent_dim={} bits={} mean_sgcs={:.9} flops={} storage_bytes={} robustness={:.9} feasible={} violations={}",
                c.index,
                c.backbone,
                c.latent_dim,
                c.bits_per_dim,
                c.mean_sgcs,
                c.flops,
                c.storage_bytes,
                c.robustness,
                c.feasible(),
                if c.violations.is_empty() { "none".to_string() } else { c.violations.join(",") }
            );
        }
        match self.selected {
            Some(i) => {
                let _ = writeln!(s, "selected={i}");
            }
            None => s.push_str("selected=none (no reference selected)\n"),
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("candidate,backbone,latent_dim,bits,mean_sgcs,flops,storage_bytes,robustness,feasible,selected\n");
        for c in &self.scores {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.9},{},{},{:.9},{},{}",
                c.index,
                c.backbone,
                c.latent_dim,
                c.bits_per_dim,
                c.mean_sgcs,
                c.flops,
                c.storage_bytes,
                c.robustness,
                c.feasible(),
                self.selected == Some(c.index)
            );
        }
        s
    }
}

/// Scores every candidate and selects the highest mean SGCS among those that
/// meet all criteria (lowest index on ties).
///
/// Each candidate is trained jointly on the training split and evaluated on
/// the held-out split. Complexity is that of the decoder. Robustness is the
/// smallest mean SGCS of the candidate decoder paired with encoders trained
/// against it on Doppler-perturbed data.
pub fn derive_reference_model(
    candidates: &[AutoencoderConfig],
    setup: &ReferenceSetup,
    criteria: &EvalCriteria,
    seed: u64,
) -> Result<(Option<ReferenceArtifact>, ReferenceReport)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate configurations"));
    }
    criteria.validate()?;
    let (train, eval) = setup.targets(1.0, seed)?;
    let perturbed: Vec<Vec<Precoder>> =
        setup.perturbations.iter().map(|&p| setup.targets(p, seed).map(|(t, _)| t)).collect::<Result<_>>()?;

    let mut scores = Vec::new();
    let mut decoders = Vec::new();
    for (i, cfg) in candidates.iter().enumerate() {
        let (enc, dec) = train_autoencoder_joint(&train, cfg, &format!("ref{i}"))?;
        let mean_sgcs = mean_reconstruction_sgcs(&enc, &dec, &eval)?;
        let mut robustness = f64::INFINITY;
        for (k, targets) in perturbed.iter().enumerate() {
            let e = train_encoder_against_reference(&dec, targets, ModelIdentity::new(format!("ref{i}-robust{k}"), 1, cfg.tag()))?;
            robustness = robustness.min(mean_reconstruction_sgcs(&e, &dec, &eval)?);
        }
        if perturbed.is_empty() {
            robustness = mean_sgcs;
        }
        let flops = dec.descriptor.flops_per_inference;
        let storage = dec.descriptor.storage_bytes;
        let mut violations = Vec::new();
        if mean_sgcs < criteria.sgcs_floor {
            violations.push("sgcs");
        }
        if flops > criteria.flops_budget {
            violations.push("flops");
        }
        if storage > criteria.storage_budget_bytes {
            violations.push("storage");
        }
        if robustness < criteria.robustness_floor {
            violations.push("robustness");
        }
        scores.push(CandidateScore {
            index: i,
            backbone: "linear",
            latent_dim: cfg.latent_dim,
            bits_per_dim: cfg.bits_per_dim,
            mean_sgcs,
            flops,
            storage_bytes: storage,
            robustness,
            violations,
        });
        decoders.push(dec);
    }
    let selected = scores
        .iter()
        .filter(|c| c.feasible())
        .fold(None::<&CandidateScore>, |best, c| match best {
            Some(b) if b.mean_sgcs >= c.mean_sgcs => Some(b),
            _ => Some(c),
        })
        .map(|c| c.index);
    let artifact = selected.map(|i| {
        let dec = decoders.swap_remove(i);
        ReferenceArtifact {
            kind: ArtifactKind::ReferenceModel,
            associated_id: dec.descriptor.associated_id.clone().unwrap_or_default(),
            payload: ArtifactPayload::Model(dec),
        }
    });
    Ok((artifact, ReferenceReport { scores, selected }))
}
