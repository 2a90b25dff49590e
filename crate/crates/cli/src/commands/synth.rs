use gamevo::data::{synth_generate, CalendarSpec, Schema, SynthSpec};
use gamevo::formula::Covariate;
use gamevo::presets::{drift_benchmark, recovery_benchmark};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{SynthArgs, SynthPreset};
use crate::error::{CliError, Result};
use crate::output::{write_atomic, write_json};

#[derive(Serialize)]
struct Truth<'a> {
    formula: String,
    seed: u64,
    rows: usize,
    spec: &'a SynthSpec,
}

pub fn run(args: SynthArgs) -> Result<()> {
    let spec = match (&args.spec, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(SynthPreset::Recovery)) => recovery_benchmark(args.sigma),
        (None, Some(SynthPreset::Drift)) => {
            let (a, b) = (args.rows * 4 / 5, args.rows);
            drift_benchmark(args.sigma, 1.5, a, b.max(a + 1))
        }
        (None, None) => return Err(CliError::Usage("pass --spec or --preset".into())),
    };
    let synth = synth_generate(&spec, args.rows, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    let ds = &synth.dataset;
    let data_path = args.out.join("data.csv");
    write_atomic(&data_path, |w| Ok(ds.write_csv("load", w)?))?;
    let schema = Schema {
        timestamp: "timestamp".into(),
        target: "load".into(),
        covariates: ds
            .registry()
            .iter()
            .map(|(name, kind)| Covariate {
                name: name.into(),
                kind: kind.clone(),
            })
            .collect(),
        calendar: CalendarSpec::default(),
    };
    write_json(&args.out.join("schema.json"), &schema)?;
    write_json(
        &args.out.join("truth.json"),
        &Truth {
            formula: synth.formula.to_dsl(),
            seed: args.seed,
            rows: args.rows,
            spec: &spec,
        },
    )?;
    println!(
        "{} rows, generating formula {}",
        ds.len(),
        synth.formula.to_dsl()
    );
    Ok(())
}
