//! `intervendor` verbs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Subcommand;
use lcm_core::intervendor::{
    cross_pairing_matrix, derive_reference_model, export_dataset, train_decoder_from_dataset,
    train_encoder_against_reference, train_multivendor_decoder, ArtifactPayload, Dataset, EvalCriteria,
    ReferenceSetup,
};
use lcm_core::models::{AutoencoderConfig, ModelIdentity};

use crate::common::{read_package, usage, write_bytes, ChannelArgs};

#[derive(Subcommand, Debug)]
pub enum IntervendorCommand {
    /// Encode targets with an encoder and write the `{target, feedback}` dataset.
    ExportDataset {
        #[arg(long)]
        encoder: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a decoder from one or more datasets sharing an associated ID.
    TrainDecoder {
        #[arg(long = "dataset", required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder against a frozen reference decoder.
    TrainEncoder {
        #[arg(long)]
        reference: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one decoder over vendor-indexed datasets (index = argument order).
    Multivendor {
        #[arg(long = "dataset", required = true, num_args = 1..)]
        datasets: Vec<PathBuf>,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean SGCS of every encoder/decoder combination.
    Crosspair {
        #[arg(long = "encoder", required = true)]
        encoders: Vec<PathBuf>,
        #[arg(long = "decoder", required = true)]
        decoders: Vec<PathBuf>,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Score candidate configurations and select a reference decoder.
    DeriveReference {
        /// `latent:bits`, repeatable.
        #[arg(long = "candidate", required = true, value_parser = parse_candidate)]
        candidates: Vec<(usize, u32)>,
        #[command(flatten)]
        channel: ChannelArgs,
        /// Held-out slots after the --slots training split.
        #[arg(long, default_value_t = 256)]
        eval_slots: usize,
        #[arg(long, default_value_t = 0.5)]
        sgcs_floor: f64,
        #[arg(long, default_value_t = 1 << 20)]
        flops_budget: u64,
        #[arg(long, default_value_t = 1 << 20)]
        storage_budget: u64,
        #[arg(long, default_value_t = 0.3)]
        robustness_floor: f64,
        /// Receives report.txt, scores.csv and reference.lcmp.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_candidate(s: &str) -> std::result::Result<(usize, u32), String> {
    let (l, b) = s.split_once(':').ok_or_else(|| format!("{s:?} is not latent:bits"))?;
    Ok((l.trim().parse().map_err(|e| format!("latent: {e}"))?, b.trim().parse().map_err(|e| format!("bits: {e}"))?))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Dataset::from_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn tag(ds: &Dataset) -> String {
    format!("CsiCompression-L{}-B{}", ds.latent_dim(), ds.quantizer.bits)
}

pub fn run(c: IntervendorCommand) -> Result<()> {
    match c {
        IntervendorCommand::ExportDataset { encoder, channel, out } => {
            let enc = read_package(&encoder)?;
            let ds = export_dataset(&enc, &channel.trace()?.true_precoders())?;
            write_bytes(&out, &ds.to_bytes()?)?;
            println!("{} records, associated_id={} -> {}", ds.len(), ds.associated_id, out.display());
        }
        IntervendorCommand::TrainDecoder { datasets, id, out } => {
            let parts = datasets.iter().map(|p| read_dataset(p)).collect::<Result<Vec<_>>>()?;
            let t = tag(&parts[0]);
            let dec = train_decoder_from_dataset(&parts, ModelIdentity::new(id, 1, t))?;
            write_bytes(&out, &dec.to_bytes())?;
            println!("{} -> {}", dec.key(), out.display());
        }
        IntervendorCommand::TrainEncoder { reference, channel, id, out } => {
            let dec = read_package(&reference)?;
            let t = dec.descriptor.functionality_tag.clone();
            let enc = train_encoder_against_reference(&dec, &channel.trace()?.true_precoders(), ModelIdentity::new(id, 1, t))?;
            write_bytes(&out, &enc.to_bytes())?;
            println!("{} -> {}", enc.key(), out.display());
        }
        IntervendorCommand::Multivendor { datasets, id, out } => {
            let parts = datasets
                .iter()
                .enumerate()
                .map(|(i, p)| Ok(read_dataset(p)?.with_vendor_index(i as u32)))
                .collect::<Result<Vec<_>>>()?;
            let t = tag(&parts[0]);
            let dec = train_multivendor_decoder(&parts, ModelIdentity::new(id, 1, t))?;
            write_bytes(&out, &dec.to_bytes())?;
            println!("{} ({} vendors) -> {}", dec.key(), parts.len(), out.display());
        }
        IntervendorCommand::Crosspair { encoders, decoders, channel } => {
            let encs = encoders.iter().map(|p| read_package(p)).collect::<Result<Vec<_>>>()?;
            let decs = decoders.iter().map(|p| read_package(p)).collect::<Result<Vec<_>>>()?;
            let m = cross_pairing_matrix(&encs, &decs, &channel.trace()?.true_precoders());
            print!("encoder\\decoder");
            for d in &decs {
                print!(",{}", d.key());
            }
            println!();
            for (e, row) in encs.iter().zip(&m) {
                print!("{}", e.key());
                for v in row {
                    match v {
                        Some(v) => print!(",{v:.6}"),
                        None => print!(","),
                    }
                }
                println!();
            }
        }
        IntervendorCommand::DeriveReference {
            candidates,
            channel,
            eval_slots,
            sgcs_floor,
            flops_budget,
            storage_budget,
            robustness_floor,
            out_dir,
        } => {
            let n = channel.antennas;
            let cands: Vec<AutoencoderConfig> = candidates
                .iter()
                .map(|&(l, b)| AutoencoderConfig { latent_dim: l, bits_per_dim: b, input_dim: n })
                .collect();
            for c in &cands {
                c.validate().map_err(|e| usage(e.to_string()))?;
            }
            let setup = ReferenceSetup::new(n, channel.regime(), channel.slots as usize, eval_slots);
            let criteria = EvalCriteria {
                sgcs_floor,
                flops_budget,
                storage_budget_bytes: storage_budget,
                robustness_floor,
            };
            criteria.validate().map_err(|e| usage(e.to_string()))?;
            let (artifact, report) = derive_reference_model(&cands, &setup, &criteria, channel.seed)?;
            write_bytes(&out_dir.join("report.txt"), report.to_text().as_bytes())?;
            write_bytes(&out_dir.join("scores.csv"), report.to_csv().as_bytes())?;
            if let Some(a) = &artifact {
                let bytes = match &a.payload {
                    ArtifactPayload::Model(m) => m.to_bytes(),
                    ArtifactPayload::Dataset(d) => d.to_bytes()?,
                };
                write_bytes(&out_dir.join("reference.lcmp"), &bytes)?;
            }
            print!("{}", report.to_text());
        }
    }
    Ok(())
}
