//! `registry list|add|verify|gc`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use lcm_core::registry::Registry;

use crate::common::read_package;

#[derive(Args, Debug)]
pub struct RegistryArgs {
    /// Registry directory.
    #[arg(long, default_value = "registry")]
    path: PathBuf,
    #[command(subcommand)]
    action: RegistryAction,
}

#[derive(Subcommand, Debug)]
enum RegistryAction {
    /// One line per stored package.
    List,
    /// Store a package file.
    Add {
        package: PathBuf,
        /// Slot recorded as the storage time.
        #[arg(long, default_value_t = 0)]
        slot: u64,
    },
    /// Re-check every stored package.
    Verify,
    /// Delete retired packages.
    Gc,
}

pub fn run(a: RegistryArgs) -> Result<()> {
    let mut reg = Registry::open(&a.path).with_context(|| format!("opening registry {}", a.path.display()))?;
    match a.action {
        RegistryAction::List => {
            for e in reg.list() {
                println!("{}\t{}\t{}\t{}\tslot={}", e.key, e.kind.as_str(), e.functionality_tag, e.status, e.stored_at_slot);
            }
        }
        RegistryAction::Add { package, slot } => {
            let p = read_package(&package)?;
            let key = reg.store(&p, slot)?;
            println!("stored {key}");
        }
        RegistryAction::Verify => {
            let mut bad = 0;
            for (key, r) in reg.verify_all() {
                match r {
                    Ok(()) => println!("ok\t{key}"),
                    Err(e) => {
                        bad += 1;
                        println!("FAIL\t{key}\t{e}");
                    }
                }
            }
            if bad > 0 {
                bail!("{bad} package(s) failed verification");
            }
        }
        RegistryAction::Gc => {
            let removed = reg.gc()?;
            for k in &removed {
                println!("removed {k}");
            }
            println!("{} package(s) removed", removed.len());
        }
    }
    Ok(())
}
