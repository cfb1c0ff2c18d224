//! `train` and `eval`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use lcm_core::channel::{measure_csi, ChannelTrace, CsiMeasurement};
use lcm_core::intervendor::mean_reconstruction_sgcs;
use lcm_core::kpi::{beam_topk_accuracy, nmse, sgcs, BeamKpiConfig};
use lcm_core::models::{
    predict_beams, predict_csi, predictor_config, train_autoencoder_joint, train_beam_predictor, AutoencoderConfig,
    ModelIdentity, ModelKind,
};
use lcm_core::registry::verify_pairing;
use lcm_core::rng::derive_seed;
use lcm_core::sim::train_preload;

use crate::common::{load_config, read_package, usage, write_bytes, ChannelArgs};

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// CSI predictor for one regime of a scenario file.
    Predictor {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        regime: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Jointly trained encoder/decoder pair.
    Autoencoder {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = 8)]
        latent: usize,
        /// Bits per latent component; 0 leaves the feedback unquantised.
        #[arg(long, default_value_t = 0)]
        bits: u32,
        #[arg(long, default_value = "ae")]
        id: String,
        /// Receives encoder.lcmp and decoder.lcmp.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Beam predictor from a measured beam subset.
    Beams {
        #[command(flatten)]
        channel: ChannelArgs,
        /// Measured beam indices, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        subset: Vec<usize>,
        #[arg(long, default_value = "beam")]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Mean SGCS of a predictor, or of an encoder/decoder pair.
    Sgcs(EvalSgcsArgs),
    /// Top-K accuracy of a beam predictor.
    Beams {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
    },
}

#[derive(Args, Debug)]
pub struct EvalSgcsArgs {
    /// Predictor or encoder package.
    #[arg(long)]
    model: PathBuf,
    /// Decoder package, required with an encoder.
    #[arg(long)]
    decoder: Option<PathBuf>,
    #[command(flatten)]
    channel: ChannelArgs,
}

fn measurements(trace: &ChannelTrace, seed: u64) -> Result<Vec<CsiMeasurement>> {
    let noise = derive_seed(seed, "noise");
    Ok(trace
        .slots
        .iter()
        .map(|s| measure_csi(&s.true_precoder, s.snr_db, noise, s.slot_index))
        .collect::<lcm_core::Result<_>>()?)
}

pub fn train(c: TrainCommand) -> Result<()> {
    match c {
        TrainCommand::Predictor { config, regime, out, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let r = cfg
                .channel
                .regimes
                .get(&regime)
                .ok_or_else(|| usage(format!("regime {regime:?} not defined in {}", config.display())))?;
            let p = train_preload(&cfg, &regime, r)?;
            write_bytes(&out, &p.to_bytes())?;
            println!("{} -> {}", p.key(), out.display());
        }
        TrainCommand::Autoencoder { channel, latent, bits, id, out_dir } => {
            let targets = channel.trace()?.true_precoders();
            let cfg = AutoencoderConfig { latent_dim: latent, bits_per_dim: bits, input_dim: channel.antennas };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let (enc, dec) = train_autoencoder_joint(&targets, &cfg, &id)?;
            write_bytes(&out_dir.join("encoder.lcmp"), &enc.to_bytes())?;
            write_bytes(&out_dir.join("decoder.lcmp"), &dec.to_bytes())?;
            let fit = mean_reconstruction_sgcs(&enc, &dec, &targets)?;
            println!("{} + {} training SGCS {fit:.6} -> {}", enc.key(), dec.key(), out_dir.display());
        }
        TrainCommand::Beams { channel, subset, id, out } => {
            let powers: Vec<Vec<f64>> = channel.trace()?.slots.into_iter().map(|s| s.per_beam_power).collect();
            let identity = ModelIdentity::new(id, 1, format!("BeamPred-S{}", subset.len()));
            let p = train_beam_predictor(&powers, &subset, channel.antennas, identity)?;
            write_bytes(&out, &p.to_bytes())?;
            println!("{} -> {}", p.key(), out.display());
        }
    }
    Ok(())
}

pub fn eval(c: EvalCommand) -> Result<()> {
    match c {
        EvalCommand::Sgcs(a) => {
            let model = read_package(&a.model)?;
            let trace = a.channel.trace()?;
            match model.kind {
                ModelKind::CsiPredictor => {
                    let pc = predictor_config(&model)?;
                    let meas = measurements(&trace, a.channel.seed)?;
                    let (mut s, mut e, mut n) = (0.0, 0.0, 0usize);
                    for t in pc.order - 1..meas.len().saturating_sub(pc.horizon_slots) {
                        let pred = predict_csi(&model, &meas[t + 1 - pc.order..=t])?;
                        let truth = &trace.slots[t + pc.horizon_slots].true_precoder;
                        s += sgcs(&pred, truth)?;
                        e += nmse(&pred, truth)?;
                        n += 1;
                    }
                    if n == 0 {
                        return Err(usage("trace too short for the predictor's order and horizon"));
                    }
                    println!("model = {}", model.key());
                    println!("predictions = {n}");
                    println!("mean_sgcs = {:.6}", s / n as f64);
                    println!("mean_nmse = {:.6}", e / n as f64);
                }
                ModelKind::CsiEncoder => {
                    let path = a.decoder.as_ref().ok_or_else(|| usage("--decoder is required with an encoder"))?;
                    let dec = read_package(path)?;
                    if !verify_pairing(&model.descriptor, &dec.descriptor)? {
                        bail!("{} and {} do not share an associated ID", model.key(), dec.key());
                    }
                    let v = mean_reconstruction_sgcs(&model, &dec, &trace.true_precoders())
                        .with_context(|| format!("{} with {}", model.key(), dec.key()))?;
                    println!("pair = {} + {}", model.key(), dec.key());
                    println!("mean_sgcs = {v:.6}");
                }
                other => return Err(usage(format!("eval sgcs does not apply to {} packages", other.as_str()))),
            }
        }
        EvalCommand::Beams { model, channel, k, m } => {
            let model = read_package(&model)?;
            model.expect_kind(ModelKind::BeamPredictor)?;
            let subset: Vec<usize> = model.real("meta.subset")?.iter().map(|&v| v as usize).collect();
            let trace = channel.trace()?;
            let history = trace
                .slots
                .iter()
                .map(|s| {
                    let measured: Vec<f64> = subset.iter().map(|&i| s.per_beam_power[i]).collect();
                    Ok((predict_beams(&model, &measured)?, s.per_beam_power.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            let acc = beam_topk_accuracy(&history, &BeamKpiConfig { n: history.len(), m, k })
                .map_err(|e| usage(e.to_string()))?;
            println!("model = {}", model.key());
            println!("top{k}_of_best{m} = {acc:.6}");
        }
    }
    Ok(())
}
