//! `tetris` command line.
//!
//! Every flag has a key of the same name (snake_case) in the optional JSON
//! `--config` file; flags override the file. The effective configuration is
//! echoed into every report. All output files of a command are rendered in
//! memory first and only then written, so a failing command leaves no partial
//! output behind.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::baselines::{reference_conv, EngineKind};
use crate::bitstats::BitReport;
use crate::error::{Error, Result};
use crate::kneader::{knead_lane, pointer_bits, validate_kneading, DEFAULT_STRIDE};
use crate::sim::{energy_report, run_network, sweep_ks, ConvLayer, EnergyModel, SimConfig};
use crate::tensor::{load_tensor, synth_tensor, Bitwidth, Distribution, FixedTensor, IntTensor, QuantSpec};

const DEFAULT_SWEEP: [usize; 5] = [8, 10, 16, 20, 32];

#[derive(Parser, Debug)]
#[command(name = "tetris", version, about = "Weight-kneading SAC accelerator simulator")]
struct Cli {
    /// JSON file with flat keys mirroring the flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bit statistics of a tensor file
    Stats(RunConfig),
    /// Knead every filter of a weight file, validate, and report word counts
    Knead(RunConfig),
    /// Run a layer (or a stack of layers) on one engine
    Run(RunConfig),
    /// Tetris cycles over a list of kneading strides
    Sweep(RunConfig),
    /// All engines side by side with speedup and EDP
    Compare(RunConfig),
    /// Generate a seeded synthetic FXT1 tensor
    Synth(RunConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Flat run configuration shared by the flags and the config file.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[arg(long, value_parser = parse_engine)]
    pub engine: Option<EngineKind>,
    /// Kneading stride; a comma-separated list for `sweep`
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub tree_latency: Option<u64>,
    /// Weight tensor(s); repeat for a layer stack
    #[arg(long)]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub pad: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub relu: Option<bool>,
    /// 8 or 16, for synthetic tensors
    #[arg(long)]
    pub bitwidth: Option<u32>,
    #[arg(long)]
    pub weight_frac_bits: Option<u32>,
    #[arg(long)]
    pub act_frac_bits: Option<u32>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub kernel: Option<usize>,
    /// Input height and width of a synthetic input
    #[arg(long)]
    pub height: Option<usize>,
    /// Synthetic weight distribution: uniform, bernoulli:D, sparse:P:<base>
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub input_dist: Option<String>,
    /// Shape for `synth`
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub shape: Vec<usize>,
    /// File stem for `synth`
    #[arg(long)]
    pub name: Option<String>,
    /// JSON energy cost table
    #[arg(long)]
    pub energy: Option<PathBuf>,
    #[arg(long)]
    pub lanes_per_unit: Option<usize>,
    /// Also write the kneaded lanes (`knead`)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dump: Option<bool>,
}

fn parse_engine(s: &str) -> std::result::Result<EngineKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    /// Keys set in `self` replace those in `base`.
    pub fn overlay(&self, base: &RunConfig) -> Result<RunConfig> {
        let mut merged = serde_json::to_value(base)?;
        let top = serde_json::to_value(self)?;
        if let (Value::Object(m), Value::Object(t)) = (&mut merged, top) {
            for (k, v) in t {
                if !v.is_null() {
                    m.insert(k, v);
                }
            }
        }
        merged.as_object_mut().unwrap().retain(|_, v| !v.is_null());
        Ok(serde_json::from_value(merged)?)
    }

    fn bits(&self) -> Result<Bitwidth> {
        match (self.bitwidth, self.engine) {
            (Some(b), _) => Bitwidth::from_bits(b),
            (None, Some(EngineKind::TetrisInt8)) => Ok(Bitwidth::B8),
            (None, _) => Ok(Bitwidth::B16),
        }
    }

    fn weight_spec(&self, bits: Bitwidth) -> Result<QuantSpec> {
        QuantSpec::new(bits, self.weight_frac_bits.unwrap_or(bits.bits() - 1))
    }

    fn act_spec(&self, bits: Bitwidth) -> Result<QuantSpec> {
        QuantSpec::new(bits, self.act_frac_bits.unwrap_or(bits.bits() / 2))
    }

    fn single_ks(&self) -> Result<usize> {
        match self.ks.as_slice() {
            [] => Ok(DEFAULT_STRIDE),
            [k] => Ok(*k),
            _ => Err(Error::Config("this command takes a single --ks".into())),
        }
    }

    fn sim_config(&self) -> Result<SimConfig> {
        let d = SimConfig::default();
        let cfg = SimConfig {
            ks: self.single_ks()?,
            tree_latency: self.tree_latency.unwrap_or(d.tree_latency),
            lanes_per_unit: self.lanes_per_unit.unwrap_or(d.lanes_per_unit),
            jobs: self.jobs.unwrap_or(d.jobs),
        };
        if cfg.jobs == 0 || cfg.lanes_per_unit == 0 {
            return Err(Error::Config("--jobs and --lanes-per-unit must be at least 1".into()));
        }
        Ok(cfg)
    }

    fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }

    fn check_files(&self) -> Result<()> {
        let paths = self.weights.iter().chain(&self.input).chain(&self.energy);
        for p in paths {
            if !p.is_file() {
                return Err(Error::Io(io::Error::new(
                    io::ErrorKind::NotFound,
                    format!("{} does not exist", p.display()),
                )));
            }
        }
        Ok(())
    }
}

/// A rendered output file.
struct Artifact {
    name: String,
    bytes: Vec<u8>,
}

impl Artifact {
    fn json(name: &str, value: &Value) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Artifact { name: name.to_string(), bytes })
    }

    /// CSV with a leading `# config:` comment line.
    fn csv(name: &str, config: &RunConfig, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Self> {
        let mut bytes = format!("# config: {}\n", serde_json::to_string(config)?).into_bytes();
        write(&mut bytes)?;
        Ok(Artifact { name: name.to_string(), bytes })
    }
}

fn emit(artifacts: Vec<Artifact>, out: Option<&Path>) -> Result<()> {
    let Some(dir) = out else {
        use std::io::Write;
        let mut stdout = io::stdout().lock();
        for a in &artifacts {
            stdout.write_all(&a.bytes)?;
        }
        return Ok(());
    };
    fs::create_dir_all(dir)?;
    let mut staged = Vec::new();
    let result = (|| {
        for a in &artifacts {
            let tmp = dir.join(format!(".{}.partial", a.name));
            fs::write(&tmp, &a.bytes)?;
            staged.push((tmp, dir.join(&a.name)));
        }
        for (tmp, dst) in &staged {
            fs::rename(tmp, dst)?;
        }
        Ok(())
    })();
    if result.is_err() {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
    }
    result
}

fn parse_dist(s: &str) -> Result<Distribution> {
    s.parse()
}

fn synthetic_input(cfg: &RunConfig, channels: usize, bits: Bitwidth) -> Result<FixedTensor> {
    let h = cfg.height.unwrap_or(8);
    let dist = parse_dist(cfg.input_dist.as_deref().unwrap_or("uniform"))?;
    synth_tensor(vec![cfg.batch.unwrap_or(1), channels, h, h], cfg.act_spec(bits)?, &dist, cfg.seed.unwrap_or(0).wrapping_add(1))
}

/// Layers and input from files, or synthesized from the seed.
fn load_problem(cfg: &RunConfig) -> Result<(Vec<ConvLayer>, FixedTensor)> {
    let stride = cfg.stride.unwrap_or(1);
    let pad = cfg.pad.unwrap_or(0);
    let relu = cfg.relu.unwrap_or(false);
    let weights: Vec<FixedTensor> = if cfg.weights.is_empty() {
        let bits = cfg.bits()?;
        let k = cfg.kernel.unwrap_or(3);
        let shape = vec![cfg.filters.unwrap_or(4), cfg.channels.unwrap_or(8), k, k];
        let dist = parse_dist(cfg.dist.as_deref().unwrap_or("bernoulli:0.311"))?;
        vec![synth_tensor(shape, cfg.weight_spec(bits)?, &dist, cfg.seed.unwrap_or(0))?]
    } else {
        cfg.weights.iter().map(load_tensor).collect::<Result<_>>()?
    };
    let first = &weights[0];
    if first.shape().len() != 4 {
        return Err(Error::Shape(format!("weights must be FCKK, got {:?}", first.shape())));
    }
    let input = match &cfg.input {
        Some(p) => load_tensor(p)?,
        None => synthetic_input(cfg, first.shape()[1], first.bitwidth())?,
    };
    let layers = weights
        .into_iter()
        .enumerate()
        .map(|(i, w)| ConvLayer::new(format!("conv{i}"), w, stride, pad).with_relu(relu))
        .collect();
    Ok((layers, input))
}

fn output_csv(out: &IntTensor, buf: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["index", "value"])?;
    for (i, v) in out.data.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_stats(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let path = cfg.weights.first().or(cfg.input.as_ref()).ok_or_else(|| Error::Config("stats needs --weights".into()))?;
    let t = load_tensor(path)?;
    let report = BitReport::of(&t)?;
    Ok(vec![match cfg.format() {
        Format::Json => Artifact::json("stats.json", &json!({ "config": cfg, "stats": report }))?,
        Format::Csv => Artifact::csv("stats.csv", cfg, |b| report.write_csv(b))?,
    }])
}

fn cmd_knead(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let path = cfg.weights.first().ok_or_else(|| Error::Config("knead needs --weights".into()))?;
    let t = load_tensor(path)?;
    let ks = cfg.single_ks()?;
    let rows = if t.shape().len() == 1 { 1 } else { t.shape()[0] };
    let lane_len = t.len() / rows;
    let mut lanes = Vec::with_capacity(rows);
    for (i, w) in t.data().chunks(lane_len).enumerate() {
        let lane = knead_lane(w, t.bitwidth(), ks)?;
        validate_kneading(w, &lane).map_err(|v| Error::Invariant(format!("lane {i}: {v}")))?;
        lanes.push(lane);
    }
    let groups: usize = lanes.iter().map(|l| l.groups.len()).sum();
    let words: usize = lanes.iter().map(|l| l.total_words()).sum();
    let entries: usize = lanes.iter().map(|l| l.total_entries()).sum();
    let summary = json!({
        "lanes": rows,
        "lane_len": lane_len,
        "ks": ks,
        "pointer_bits": pointer_bits(ks),
        "groups": groups,
        "weights": t.len(),
        "words": words,
        "essential_bits": entries,
        "words_per_group": words as f64 / groups as f64,
        "words_per_weight": words as f64 / t.len() as f64,
        "valid": true,
    });
    let mut out = match cfg.format() {
        Format::Json => vec![Artifact::json("knead.json", &json!({ "config": cfg, "knead": summary }))?],
        Format::Csv => vec![Artifact::csv("knead.csv", cfg, |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["lane", "groups", "weights", "words", "essential_bits"])?;
            for (i, l) in lanes.iter().enumerate() {
                w.write_record([i, l.groups.len(), l.len, l.total_words(), l.total_entries()].map(|v| v.to_string()))?;
            }
            w.flush()?;
            Ok(())
        })?],
    };
    if cfg.dump.unwrap_or(false) {
        let dumps: Vec<_> = lanes.iter().map(|l| l.dump()).collect();
        out.push(Artifact::json("kneaded.json", &serde_json::to_value(dumps)?)?);
    }
    Ok(out)
}

fn cmd_run(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let engine = cfg.engine.unwrap_or(EngineKind::TetrisFp16);
    let (layers, input) = load_problem(cfg)?;
    let act = cfg.act_spec(input.bitwidth())?;
    let run = run_network(engine, &layers, &input, act, &cfg.sim_config()?)?;
    Ok(match cfg.format() {
        Format::Json => vec![
            Artifact::json("output.json", &serde_json::to_value(&run.output)?)?,
            Artifact::json("report.json", &json!({ "config": cfg, "report": run.report }))?,
        ],
        Format::Csv => vec![
            Artifact::csv("output.csv", cfg, |b| output_csv(&run.output, b))?,
            Artifact::csv("layers.csv", cfg, |b| run.report.write_layer_csv(b))?,
            Artifact::csv("lanes.csv", cfg, |b| run.report.write_lane_csv(b))?,
        ],
    })
}

fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let (layers, input) = load_problem(cfg)?;
    let layer = &layers[0];
    let engine = cfg.engine.unwrap_or(match layer.weights.bitwidth() {
        Bitwidth::B8 => EngineKind::TetrisInt8,
        Bitwidth::B16 => EngineKind::TetrisFp16,
    });
    let ks_list = if cfg.ks.is_empty() { DEFAULT_SWEEP.to_vec() } else { cfg.ks.clone() };
    let sim = SimConfig { ks: ks_list[0], ..RunConfig { ks: vec![], ..cfg.clone() }.sim_config()? };
    let rows = sweep_ks(engine, layer, &input, &ks_list, &sim)?;
    Ok(vec![match cfg.format() {
        Format::Json => Artifact::json("sweep.json", &json!({ "config": cfg, "engine": engine, "rows": rows }))?,
        Format::Csv => Artifact::csv("sweep.csv", cfg, |b| {
            let mut w = csv::Writer::from_writer(b);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        })?,
    }])
}

#[derive(Serialize)]
struct CompareRow {
    engine: EngineKind,
    total_cycles: u64,
    accumulation_cycles: u64,
    tree_cycles: u64,
    pe_step_cycles: u64,
    speedup_vs_mac: f64,
    energy: f64,
    edp: f64,
    normalized_edp: Option<f64>,
}

fn cmd_compare(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let (layers, input) = load_problem(cfg)?;
    let sim = cfg.sim_config()?;
    let act = cfg.act_spec(input.bitwidth())?;
    let int8_ok = input.bitwidth() == Bitwidth::B8 && layers.iter().all(|l| l.weights.bitwidth() == Bitwidth::B8);
    let engines: Vec<EngineKind> = EngineKind::ALL.into_iter().filter(|&e| e != EngineKind::TetrisInt8 || int8_ok).collect();

    let runs = engines
        .iter()
        .map(|&e| run_network(e, &layers, &input, act, &sim))
        .collect::<Result<Vec<_>>>()?;
    let reference = &runs.iter().find(|r| r.report.engine == EngineKind::MacParallel).unwrap().output;
    for r in &runs {
        if &r.output != reference {
            return Err(Error::Invariant(format!("{} output differs from the MAC output", r.report.engine)));
        }
    }
    if layers.len() == 1 {
        let l = &layers[0];
        let mut oracle = reference_conv(&input, &l.weights, l.stride, l.pad)?;
        if l.relu {
            oracle = crate::sim::relu(&oracle);
        }
        if &oracle != reference {
            return Err(Error::Invariant("engine outputs differ from the reference convolution".into()));
        }
    }

    let model = match &cfg.energy {
        Some(p) => EnergyModel::load(p)?,
        None => EnergyModel::default(),
    };
    let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
    let edp = energy_report(&reports, &model, EngineKind::MacParallel)?;
    let mac = reports.iter().find(|r| r.engine == EngineKind::MacParallel).unwrap();
    let rows: Vec<CompareRow> = reports
        .iter()
        .zip(&edp)
        .map(|(r, e)| CompareRow {
            engine: r.engine,
            total_cycles: r.total_cycles,
            accumulation_cycles: r.accumulation_cycles,
            tree_cycles: r.tree_cycles,
            pe_step_cycles: r.pe_step_cycles,
            speedup_vs_mac: r.speedup_over(mac),
            energy: e.energy,
            edp: e.edp,
            normalized_edp: e.normalized_edp,
        })
        .collect();
    let stats = BitReport::of(&layers[0].weights)?;
    Ok(match cfg.format() {
        Format::Json => vec![
            Artifact::json(
                "compare.json",
                &json!({
                    "config": cfg,
                    "energy_model": model,
                    "outputs_identical": true,
                    "weight_zero_bit_fraction": stats.zero_bit_fraction,
                    "engines": rows,
                }),
            )?,
            Artifact::json("output.json", &serde_json::to_value(reference)?)?,
        ],
        Format::Csv => vec![
            Artifact::csv("compare.csv", cfg, |b| {
                let mut w = csv::Writer::from_writer(b);
                for r in &rows {
                    w.serialize(r)?;
                }
                w.flush()?;
                Ok(())
            })?,
            Artifact::csv("output.csv", cfg, |b| output_csv(reference, b))?,
        ],
    })
}

fn cmd_synth(cfg: &RunConfig) -> Result<(Vec<Artifact>, Value)> {
    if cfg.shape.is_empty() {
        return Err(Error::Config("synth needs --shape".into()));
    }
    let bits = cfg.bits()?;
    let spec = QuantSpec::new(bits, cfg.weight_frac_bits.unwrap_or(bits.bits() - 1))?;
    let dist = parse_dist(cfg.dist.as_deref().unwrap_or("uniform"))?;
    let t = synth_tensor(cfg.shape.clone(), spec, &dist, cfg.seed.unwrap_or(0))?;
    let name = format!("{}.fxt", cfg.name.as_deref().unwrap_or("tensor"));
    let bytes = crate::tensor::encode_fxt(&t)?;
    let summary = json!({ "config": cfg, "file": name, "elements": t.len(), "stats": BitReport::of(&t)? });
    Ok((vec![Artifact { name, bytes }], summary))
}

/// Fills defaults so the echoed config is complete.
fn effective(cmd: &Command, cfg: RunConfig) -> RunConfig {
    let mut c = cfg;
    c.seed.get_or_insert(0);
    c.format.get_or_insert(Format::Json);
    if matches!(cmd, Command::Run(_) | Command::Sweep(_) | Command::Compare(_)) {
        c.tree_latency.get_or_insert(1);
        c.jobs.get_or_insert(1);
        c.stride.get_or_insert(1);
        c.pad.get_or_insert(0);
        c.relu.get_or_insert(false);
        c.lanes_per_unit.get_or_insert(16);
    }
    if matches!(cmd, Command::Run(_) | Command::Knead(_) | Command::Compare(_)) && c.ks.is_empty() {
        c.ks = vec![DEFAULT_STRIDE];
    }
    if matches!(cmd, Command::Sweep(_)) && c.ks.is_empty() {
        c.ks = DEFAULT_SWEEP.to_vec();
    }
    c
}

fn dispatch(cli: Cli) -> Result<()> {
    let flags = match &cli.command {
        Command::Stats(c) | Command::Knead(c) | Command::Run(c) | Command::Sweep(c) | Command::Compare(c) | Command::Synth(c) => c,
    };
    let file = match &cli.config {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    let cfg = effective(&cli.command, flags.overlay(&file)?);
    cfg.check_files()?;
    let artifacts = match &cli.command {
        Command::Stats(_) => cmd_stats(&cfg)?,
        Command::Knead(_) => cmd_knead(&cfg)?,
        Command::Run(_) => cmd_run(&cfg)?,
        Command::Sweep(_) => cmd_sweep(&cfg)?,
        Command::Compare(_) => cmd_compare(&cfg)?,
        Command::Synth(_) => {
            let (files, summary) = cmd_synth(&cfg)?;
            emit(files, Some(cfg.out.as_deref().unwrap_or(Path::new("."))))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            return Ok(());
        }
    };
    emit(artifacts, cfg.out.as_deref())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
