//! Stage orchestration with file artifacts and a checksum manifest.
//!
//! Every stage reads its inputs from files under the output directory and
//! writes its outputs there. The manifest records, per stage, a fingerprint
//! of the settings it ran with and SHA-256 digests of its inputs and
//! outputs. A stage whose fingerprint and inputs are unchanged and whose
//! outputs are intact is skipped.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{emit_report, Aggregate, Report, REPORT_FILES};
use crate::config::{CliConfig, ToySection};
use crate::error::{Error, Result};
use crate::forest::{evaluate, fit_forest, load_forest, save_forest, Evaluation, FeatureMatrix, Forest, Prediction};
use crate::labeling::{label_dataset, split_indices, LabelSpec, LabeledDataset};
use crate::sampler::{fit_moments, ConfigGenerator, GeneratedConfig};
use crate::schema::{
    ingest_path, write_runs, write_runs_with_ids, GeneratedReader, GeneratedWriter, ParameterSchema, RunCorpus,
    RunRecord,
};
use crate::toyabm::{generate_corpus, ToyWorld, ToyWorldSpec, CALIBRATED_NOISE};

pub const RUNS: &str = "runs.csv";
pub const VALID_RUNS: &str = "valid_runs.csv";
pub const INVALID_RUNS: &str = "invalid_runs.csv";
pub const LABELS: &str = "labels.csv";
pub const FOREST: &str = "forest.bin";
pub const EVALUATION: &str = "evaluation.toml";
pub const GENERATED: &str = "generated.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const REPORT_DIR: &str = "report";
pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Toygen,
    Ingest,
    Label,
    Train,
    Eval,
    Generate,
    Emulate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Toygen,
        Stage::Ingest,
        Stage::Label,
        Stage::Train,
        Stage::Eval,
        Stage::Generate,
        Stage::Emulate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Toygen => "toygen",
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Generate => "generate",
            Stage::Emulate => "emulate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

/// Artifact locations. Paths inside the output directory are stored
/// relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub corpus: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub valid_runs: String,
    pub labels: String,
    pub forest: String,
    pub generated: String,
    pub predictions: String,
    pub report_dir: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    pub inputs: BTreeMap<String, String>,
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    /// Row counts in and out, for conservation checks.
    #[serde(default)]
    pub rows: BTreeMap<String, u64>,
    /// False while the stage is running or after it failed.
    #[serde(default)]
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub master_seed: u64,
    pub paths: ArtifactPaths,
    pub label: LabelSpec,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
}

impl PipelineManifest {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.get(stage.name())
    }
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
        w.get_ref().sync_all().map_err(|e| Error::io(&tmp, e))?;
        Ok(())
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Classifies configurations in batches of `batch_size`, yielding one
/// prediction per configuration in input order.
pub struct Emulation<'f, I> {
    forest: &'f Forest,
    source: I,
    batch_size: usize,
    ready: VecDeque<(GeneratedConfig, Prediction)>,
    failed: bool,
}

pub fn emulate<'f, I>(
    forest: &'f Forest,
    schema: &ParameterSchema,
    configs: I,
    batch_size: usize,
) -> Result<Emulation<'f, I::IntoIter>>
where
    I: IntoIterator<Item = Result<GeneratedConfig>>,
{
    forest.encoding().check_schema(schema)?;
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    Ok(Emulation {
        forest,
        source: configs.into_iter(),
        batch_size,
        ready: VecDeque::new(),
        failed: false,
    })
}

impl<I: Iterator<Item = Result<GeneratedConfig>>> Emulation<'_, I> {
    fn refill(&mut self) -> Result<()> {
        let mut batch = Vec::with_capacity(self.batch_size);
        for item in self.source.by_ref() {
            batch.push(item?);
            if batch.len() == self.batch_size {
                break;
            }
        }
        if batch.is_empty() {
            return Ok(());
        }
        let encoding = self.forest.encoding().clone();
        let mut data = vec![0.0; batch.len() * encoding.n_cols()];
        for (cfg, row) in batch.iter().zip(data.chunks_exact_mut(encoding.n_cols())) {
            if cfg.reals.len() + cfg.choices.len() != encoding.params().len() {
                return Err(Error::DimensionMismatch {
                    expected: encoding.params().len(),
                    actual: cfg.reals.len() + cfg.choices.len(),
                });
            }
            encoding.encode_generated(cfg, row);
        }
        let matrix = FeatureMatrix::new(data, encoding)?;
        let predictions = self.forest.predict_matrix(&matrix)?;
        self.ready.extend(batch.into_iter().zip(predictions));
        Ok(())
    }
}

impl<I: Iterator<Item = Result<GeneratedConfig>>> Iterator for Emulation<'_, I> {
    type Item = Result<(GeneratedConfig, Prediction)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.ready.is_empty() {
            if let Err(e) = self.refill() {
                self.failed = true;
                return Some(Err(e));
            }
        }
        self.ready.pop_front().map(Ok)
    }
}

/// Stage runner bound to one configuration and output directory.
#[derive(Debug)]
pub struct Pipeline {
    config: CliConfig,
    schema: ParameterSchema,
    label: LabelSpec,
    out: PathBuf,
    manifest: PipelineManifest,
}

struct Plan {
    fingerprint: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Pipeline {
    /// Opens `config.out`, loading an existing manifest if there is one.
    pub fn open(config: CliConfig) -> Result<Self> {
        config.validate()?;
        let schema = match &config.schema {
            Some(p) => ParameterSchema::load(p)?,
            None => ParameterSchema::default_schema(),
        };
        let label = config.label_spec()?;
        let out = config.out.clone();
        let paths = ArtifactPaths {
            corpus: match &config.corpus {
                Some(p) => p.to_string_lossy().into_owned(),
                None => RUNS.into(),
            },
            schema: config.schema.as_ref().map(|p| p.to_string_lossy().into_owned()),
            valid_runs: VALID_RUNS.into(),
            labels: LABELS.into(),
            forest: FOREST.into(),
            generated: GENERATED.into(),
            predictions: PREDICTIONS.into(),
            report_dir: REPORT_DIR.into(),
        };
        let manifest_path = out.join(REPORT_DIR).join(MANIFEST);
        let stages = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            PipelineManifest::parse(&text)?.stages
        } else {
            BTreeMap::new()
        };
        let manifest = PipelineManifest {
            master_seed: config.seed,
            paths,
            label: label.clone(),
            stages,
        };
        Ok(Self {
            config,
            schema,
            label,
            out,
            manifest,
        })
    }

    pub fn manifest(&self) -> &PipelineManifest {
        &self.manifest
    }

    pub fn schema(&self) -> &ParameterSchema {
        &self.schema
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.join(REPORT_DIR).join(MANIFEST)
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out.join(REPORT_DIR)
    }

    /// Stages that apply to this configuration, in execution order.
    pub fn stages(&self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|&s| s != Stage::Toygen || self.config.toy.is_some())
            .collect()
    }

    pub fn run_all(&mut self) -> Result<Vec<(Stage, StageOutcome)>> {
        self.stages()
            .into_iter()
            .map(|s| self.run_stage(s).map(|o| (s, o)))
            .collect()
    }

    fn resolve(&self, artifact: &str) -> PathBuf {
        let p = Path::new(artifact);
        let external = artifact == self.manifest.paths.corpus && self.config.corpus.is_some();
        if p.is_absolute() || external {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    fn save_manifest(&self) -> Result<()> {
        let path = self.manifest_path();
        let text = self.manifest.to_toml();
        write_atomic(&path, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e)))
    }

    fn plan(&self, stage: Stage) -> Result<Plan> {
        let c = &self.config;
        let schema_text = self.schema.to_toml();
        let seed = c.seed.to_string();
        let (settings, inputs, outputs): (Vec<String>, Vec<&str>, Vec<&str>) = match stage {
            Stage::Toygen => {
                let toy = c
                    .toy
                    .as_ref()
                    .ok_or_else(|| Error::Config("toygen needs a [toy] section".into()))?;
                let spec = self.world_spec(toy)?;
                (vec![seed, toy.runs.to_string(), spec.to_toml()], vec![], vec![RUNS])
            }
            Stage::Ingest => (vec![], vec![&self.manifest.paths.corpus], vec![VALID_RUNS, INVALID_RUNS]),
            Stage::Label => (
                vec![
                    seed,
                    toml::to_string(&self.label).expect("label spec serializes"),
                    c.test_fraction.to_string(),
                    c.stratified.to_string(),
                ],
                vec![VALID_RUNS],
                vec![LABELS],
            ),
            Stage::Train => (
                vec![seed, toml::to_string(&c.forest).expect("hyperparams serialize")],
                vec![VALID_RUNS, LABELS],
                vec![FOREST],
            ),
            Stage::Eval => (vec![], vec![VALID_RUNS, LABELS, FOREST], vec![EVALUATION]),
            Stage::Generate => (vec![seed, c.n_generate.to_string()], vec![VALID_RUNS], vec![GENERATED]),
            Stage::Emulate => (vec![], vec![FOREST, GENERATED], vec![PREDICTIONS]),
            Stage::Report => {
                let outputs = REPORT_FILES.iter().map(|f| format!("{REPORT_DIR}/{f}")).collect::<Vec<_>>();
                return Ok(Plan {
                    fingerprint: fingerprint(&[stage.name(), &schema_text]),
                    inputs: vec![VALID_RUNS.into(), LABELS.into(), PREDICTIONS.into()],
                    outputs,
                });
            }
        };
        let mut parts: Vec<&str> = vec![stage.name(), &schema_text];
        parts.extend(settings.iter().map(String::as_str));
        Ok(Plan {
            fingerprint: fingerprint(&parts),
            inputs: inputs.into_iter().map(str::to_owned).collect(),
            outputs: outputs.into_iter().map(str::to_owned).collect(),
        })
    }

    /// Runs one stage unless its recorded inputs, settings and outputs are
    /// all unchanged.
    pub fn run_stage(&mut self, stage: Stage) -> Result<StageOutcome> {
        let plan = self.plan(stage)?;
        let mut inputs = BTreeMap::new();
        for name in &plan.inputs {
            let path = self.resolve(name);
            if !path.is_file() {
                return Err(Error::MissingArtifact(path));
            }
            let digest = sha256_file(&path)?;
            self.check_upstream(stage, name, &path, &digest)?;
            inputs.insert(name.clone(), digest);
        }
        if let Some(prev) = self.manifest.stage(stage) {
            if prev.complete && prev.fingerprint == plan.fingerprint && prev.inputs == inputs && self.outputs_intact(prev)? {
                return Ok(StageOutcome::Skipped);
            }
        }
        self.manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                fingerprint: plan.fingerprint.clone(),
                inputs: inputs.clone(),
                ..StageRecord::default()
            },
        );
        self.save_manifest()?;

        let rows = self.execute(stage)?;

        let mut outputs = BTreeMap::new();
        for name in &plan.outputs {
            let path = self.resolve(name);
            outputs.insert(name.clone(), sha256_file(&path)?);
        }
        self.manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                fingerprint: plan.fingerprint,
                inputs,
                outputs,
                rows,
                complete: true,
            },
        );
        self.save_manifest()?;
        Ok(StageOutcome::Ran)
    }

    /// An input produced by an upstream stage must still match the digest
    /// that stage recorded.
    fn check_upstream(&self, stage: Stage, name: &str, path: &Path, digest: &str) -> Result<()> {
        for (other, record) in &self.manifest.stages {
            if other == stage.name() {
                continue;
            }
            if let Some(recorded) = record.outputs.get(name) {
                if recorded != digest {
                    return Err(Error::ChecksumConflict {
                        path: path.to_path_buf(),
                        recorded: recorded.clone(),
                        found: digest.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    fn outputs_intact(&self, record: &StageRecord) -> Result<bool> {
        for (name, digest) in &record.outputs {
            let path = self.resolve(name);
            if !path.is_file() || sha256_file(&path)? != *digest {
                return Ok(false);
            }
        }
        Ok(!record.outputs.is_empty())
    }

    fn world_spec(&self, toy: &ToySection) -> Result<ToyWorldSpec> {
        let mut spec = match &toy.world {
            Some(p) => ToyWorldSpec::load(p)?,
            None => ToyWorldSpec::default_preset(&self.schema).with_noise(CALIBRATED_NOISE),
        };
        if let Some(noise) = toy.noise {
            spec.noise = noise;
        }
        Ok(spec)
    }

    fn execute(&self, stage: Stage) -> Result<BTreeMap<String, u64>> {
        match stage {
            Stage::Toygen => self.toygen(),
            Stage::Ingest => self.ingest(),
            Stage::Label => self.label(),
            Stage::Train => self.train(),
            Stage::Eval => self.eval(),
            Stage::Generate => self.generate(),
            Stage::Emulate => self.emulate(),
            Stage::Report => self.report(),
        }
    }

    fn toygen(&self) -> Result<BTreeMap<String, u64>> {
        let toy = self.config.toy.as_ref().expect("planned with a [toy] section");
        let spec = self.world_spec(toy)?;
        let world = ToyWorld::new(&spec, &self.schema)?;
        let seed = world.seed().unwrap_or(self.config.seed);
        let corpus = generate_corpus(&world, &self.schema, toy.runs, seed)?;
        let path = self.out.join(RUNS);
        write_atomic(&path, |w| write_runs(w, &self.schema, &corpus.indicator_names, &corpus.records))?;
        Ok(rows([("out", corpus.records.len())]))
    }

    fn ingest(&self) -> Result<BTreeMap<String, u64>> {
        let corpus = ingest_path(&self.resolve(&self.manifest.paths.corpus), &self.schema)?;
        write_atomic(&self.out.join(VALID_RUNS), |w| {
            write_runs_with_ids(w, &self.schema, &corpus.indicator_names, corpus.valid_records())
        })?;
        write_atomic(&self.out.join(INVALID_RUNS), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["run_id", "violations"])?;
            for (id, v) in &corpus.violations {
                let joined = v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
                csv.write_record([id.to_string(), joined])?;
            }
            csv.flush().map_err(|e| Error::io(INVALID_RUNS, e))
        })?;
        Ok(rows([
            ("in", corpus.records.len()),
            ("valid", corpus.n_valid()),
            ("invalid", corpus.n_invalid()),
        ]))
    }

    fn load_valid(&self) -> Result<RunCorpus> {
        let corpus = ingest_path(&self.out.join(VALID_RUNS), &self.schema)?;
        if corpus.n_invalid() > 0 {
            return Err(Error::Corpus(format!("{VALID_RUNS} holds {} invalid rows", corpus.n_invalid())));
        }
        Ok(corpus)
    }

    fn label(&self) -> Result<BTreeMap<String, u64>> {
        let corpus = self.load_valid()?;
        let records: Vec<&RunRecord> = corpus.records.iter().collect();
        let labels = label_dataset(&records, &corpus.indicator_names, &self.label)?;
        let (_, test) = split_indices(&labels, self.config.test_fraction, self.config.seed, self.config.stratified)?;
        let mut is_test = vec![false; labels.len()];
        for i in test {
            is_test[i] = true;
        }
        write_atomic(&self.out.join(LABELS), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["run_id", "label", "split"])?;
            for ((r, l), t) in records.iter().zip(&labels).zip(&is_test) {
                csv.write_record([r.id.to_string(), l.to_string(), if *t { "test" } else { "train" }.to_string()])?;
            }
            csv.flush().map_err(|e| Error::io(LABELS, e))
        })?;
        let n_test = is_test.iter().filter(|&&t| t).count();
        Ok(rows([
            ("in", labels.len()),
            ("optimal", labels.iter().filter(|&&l| l == 1).count()),
            ("train", labels.len() - n_test),
            ("test", n_test),
        ]))
    }

    fn labeled(&self) -> Result<(LabeledDataset, Vec<bool>)> {
        let corpus = self.load_valid()?;
        let labels = read_labels(&self.out.join(LABELS))?;
        if labels.len() != corpus.records.len() {
            return Err(Error::Corpus(format!(
                "{LABELS} has {} rows for {} runs",
                labels.len(),
                corpus.records.len()
            )));
        }
        for (r, (id, _, _)) in corpus.records.iter().zip(&labels) {
            if r.id != *id {
                return Err(Error::Corpus(format!("{LABELS} run {id} does not match run {}", r.id)));
            }
        }
        let records: Vec<&RunRecord> = corpus.records.iter().collect();
        let features = FeatureMatrix::from_records(&records, &self.schema)?;
        let data = LabeledDataset::new(
            features,
            labels.iter().map(|l| l.1).collect(),
            labels.iter().map(|l| l.0).collect(),
        )?;
        Ok((data, labels.iter().map(|l| l.2).collect()))
    }

    fn train(&self) -> Result<BTreeMap<String, u64>> {
        let (data, is_test) = self.labeled()?;
        let train_rows: Vec<usize> = (0..data.len()).filter(|&i| !is_test[i]).collect();
        let train = data.subset(&train_rows);
        let forest = fit_forest(&train.features, &train.labels, &self.config.forest, self.config.seed)?;
        save_forest(&forest, &self.out.join(FOREST))?;
        Ok(rows([("train", train.len()), ("trees", forest.trees().len())]))
    }

    fn eval(&self) -> Result<BTreeMap<String, u64>> {
        let (data, is_test) = self.labeled()?;
        let forest = load_forest(&self.out.join(FOREST))?;
        let test_rows: Vec<usize> = (0..data.len()).filter(|&i| is_test[i]).collect();
        let test = data.subset(&test_rows);
        let evaluation = evaluate(&forest, &test)?;
        let text = toml::to_string(&evaluation).expect("evaluation serializes");
        let path = self.out.join(EVALUATION);
        write_atomic(&path, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e)))?;
        Ok(rows([("test", test.len())]))
    }

    /// The evaluation written by the `eval` stage.
    pub fn evaluation(&self) -> Result<Evaluation> {
        let path = self.out.join(EVALUATION);
        if !path.is_file() {
            return Err(Error::MissingArtifact(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{EVALUATION}: {e}")))
    }

    fn generate(&self) -> Result<BTreeMap<String, u64>> {
        let corpus = self.load_valid()?;
        let records: Vec<&RunRecord> = corpus.records.iter().collect();
        let moments = fit_moments(&records, &self.schema)?;
        let generator = ConfigGenerator::new(&self.schema, &moments)?;
        let n = self.config.n_generate;
        write_atomic(&self.out.join(GENERATED), |w| {
            let mut out = GeneratedWriter::new(w, &self.schema, false)?;
            for batch in generator.batches(self.config.seed, n, self.config.batch_size) {
                for cfg in &batch {
                    out.write(&self.schema, cfg, None)?;
                }
            }
            out.finish().map(|_| ())
        })?;
        Ok(rows([("out", n as usize)]))
    }

    fn emulate(&self) -> Result<BTreeMap<String, u64>> {
        let forest = load_forest(&self.out.join(FOREST))?;
        let path = self.out.join(GENERATED);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let reader = GeneratedReader::new(BufReader::new(file), &self.schema)?;
        let configs = reader.map(|r| r.map(|(c, _)| c));
        let stream = emulate(&forest, &self.schema, configs, self.config.batch_size as usize)?;
        let mut n = 0usize;
        let mut optimal = 0usize;
        write_atomic(&self.out.join(PREDICTIONS), |w| {
            let mut out = GeneratedWriter::new(w, &self.schema, true)?;
            for item in stream {
                let (cfg, p) = item?;
                out.write(&self.schema, &cfg, Some(&p))?;
                n += 1;
                optimal += p.class as usize;
            }
            out.finish().map(|_| ())
        })?;
        Ok(rows([("in", n), ("out", n), ("optimal", optimal)]))
    }

    fn report(&self) -> Result<BTreeMap<String, u64>> {
        let path = self.out.join(PREDICTIONS);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let reader = GeneratedReader::new(BufReader::new(file), &self.schema)?;
        if !reader.has_predictions() {
            return Err(Error::Corpus(format!("{PREDICTIONS} lacks prediction columns")));
        }
        let mut surrogate = Aggregate::new(&self.schema);
        let mut n = 0usize;
        for item in reader {
            let (cfg, p) = item?;
            surrogate.add_config(&cfg, p.expect("prediction columns present").class);
            n += 1;
        }
        let corpus = self.load_valid()?;
        let labels = read_labels(&self.out.join(LABELS))?;
        let records: Vec<&RunRecord> = corpus.records.iter().collect();
        let classes: Vec<u8> = labels.iter().map(|l| l.1).collect();
        let reference = Aggregate::from_records(&self.schema, &records, &classes)?;
        let report = Report::build(&self.schema, &surrogate, Some(&reference))?;
        emit_report(&report, &self.report_dir())?;
        Ok(rows([("in", n)]))
    }
}

fn fingerprint(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex(&h.finalize())
}

fn rows<const N: usize>(items: [(&str, usize); N]) -> BTreeMap<String, u64> {
    items.into_iter().map(|(k, v)| (k.to_string(), v as u64)).collect()
}

/// `(run_id, label, is_test)` rows of a labels file.
pub fn read_labels(path: &Path) -> Result<Vec<(u64, u8, bool)>> {
    if !path.is_file() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |column: &str, value: &str| Error::BadNumber {
            row,
            column: column.into(),
            value: value.into(),
        };
        let id = rec[0].parse().map_err(|_| bad("run_id", &rec[0]))?;
        let label = match &rec[1] {
            "0" => 0,
            "1" => 1,
            v => return Err(bad("label", v)),
        };
        let is_test = match &rec[2] {
            "test" => true,
            "train" => false,
            v => return Err(Error::Corpus(format!("row {row}: unknown split `{v}`"))),
        };
        out.push((id, label, is_test));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::Hyperparams;

    fn toy_config(dir: &Path) -> CliConfig {
        let mut c = CliConfig::parse("seed = 5\nn_generate = 3000\nbatch_size = 700\n[toy]\nruns = 1500\n[forest]\nn_trees = 8\nmax_depth = 8\n").unwrap();
        c.out = dir.to_path_buf();
        c
    }

    #[test]
    fn stage_names_roundtrip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("nope".parse::<Stage>().is_err());
    }

    #[test]
    fn emulate_before_train_is_missing_input() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Pipeline::open(toy_config(dir.path())).unwrap();
        match p.run_stage(Stage::Emulate) {
            Err(Error::MissingArtifact(path)) => assert!(path.ends_with(FOREST)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rerun_is_skipped_and_tampering_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Pipeline::open(toy_config(dir.path())).unwrap();
        for s in [Stage::Toygen, Stage::Ingest, Stage::Label, Stage::Train] {
            assert_eq!(p.run_stage(s).unwrap(), StageOutcome::Ran);
        }
        assert_eq!(p.run_stage(Stage::Train).unwrap(), StageOutcome::Skipped);

        let mut reopened = Pipeline::open(toy_config(dir.path())).unwrap();
        assert_eq!(reopened.run_stage(Stage::Train).unwrap(), StageOutcome::Skipped);

        let labels = dir.path().join(LABELS);
        let mut text = fs::read_to_string(&labels).unwrap();
        text.push_str("999999,1,train\n");
        fs::write(&labels, text).unwrap();
        assert!(matches!(reopened.run_stage(Stage::Train), Err(Error::ChecksumConflict { .. })));
        assert_eq!(reopened.run_stage(Stage::Label).unwrap(), StageOutcome::Ran);
        assert_eq!(reopened.run_stage(Stage::Train).unwrap(), StageOutcome::Skipped);
    }

    #[test]
    fn changed_settings_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Pipeline::open(toy_config(dir.path())).unwrap();
        for s in [Stage::Toygen, Stage::Ingest, Stage::Label, Stage::Train] {
            p.run_stage(s).unwrap();
        }
        let mut c = toy_config(dir.path());
        c.forest = Hyperparams { n_trees: 9, ..c.forest };
        let mut p = Pipeline::open(c).unwrap();
        assert_eq!(p.run_stage(Stage::Label).unwrap(), StageOutcome::Skipped);
        assert_eq!(p.run_stage(Stage::Train).unwrap(), StageOutcome::Ran);
    }

    #[test]
    fn full_run_conserves_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Pipeline::open(toy_config(dir.path())).unwrap();
        let outcomes = p.run_all().unwrap();
        assert!(outcomes.iter().all(|(_, o)| *o == StageOutcome::Ran));
        let m = p.manifest();
        let rows = |s: Stage, k: &str| m.stage(s).unwrap().rows[k];
        assert_eq!(rows(Stage::Toygen, "out"), 1500);
        assert_eq!(rows(Stage::Ingest, "in"), 1500);
        assert_eq!(rows(Stage::Label, "in"), rows(Stage::Ingest, "valid"));
        assert_eq!(rows(Stage::Emulate, "in"), 3000);
        assert_eq!(rows(Stage::Report, "in"), 3000);
        for f in REPORT_FILES {
            assert!(dir.path().join(REPORT_DIR).join(f).is_file(), "{f}");
        }
        let saved = PipelineManifest::parse(&fs::read_to_string(p.manifest_path()).unwrap()).unwrap();
        assert_eq!(&saved, m);
        assert!(p.run_all().unwrap().iter().all(|(_, o)| *o == StageOutcome::Skipped));
    }

    #[test]
    fn emulate_streams_in_order() {
        let schema = ParameterSchema::default_schema();
        let world = ToyWorld::new(&ToyWorldSpec::default_preset(&schema), &schema).unwrap();
        let corpus = generate_corpus(&world, &schema, 400, 1).unwrap();
        let records: Vec<&RunRecord> = corpus.records.iter().collect();
        let labels = label_dataset(&records, &corpus.indicator_names, &LabelSpec::new("gdp_index", "gini_index")).unwrap();
        let features = FeatureMatrix::from_records(&records, &schema).unwrap();
        let params = Hyperparams { n_trees: 5, ..Hyperparams::default() };
        let forest = fit_forest(&features, &labels, &params, 2).unwrap();
        let moments = fit_moments(&records, &schema).unwrap();
        let configs = ConfigGenerator::new(&schema, &moments).unwrap().range(3, 0..1000);

        assert_eq!(emulate(&forest, &schema, Vec::new(), 10).unwrap().count(), 0);

        let whole = forest.predict_matrix(&FeatureMatrix::from_generated(&configs, &schema).unwrap()).unwrap();
        let streamed: Vec<(GeneratedConfig, Prediction)> = emulate(&forest, &schema, configs.iter().cloned().map(Ok), 97)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(streamed.len(), 1000);
        for (i, ((c, p), w)) in streamed.iter().zip(&whole).enumerate() {
            assert_eq!(c.id, i as u64);
            assert_eq!(p, w);
        }
        let dup = vec![Ok(configs[7].clone()), Ok(configs[7].clone())];
        let out: Vec<_> = emulate(&forest, &schema, dup, 1).unwrap().map(|r| r.unwrap().1).collect();
        assert_eq!(out[0], out[1]);

        let mut other = schema.to_toml();
        other = other.replacen("\"Purchase\"", "\"Buy\"", 1);
        let other = ParameterSchema::parse(&other).unwrap();
        assert!(matches!(emulate(&forest, &other, Vec::new(), 10), Err(Error::EncodingMismatch(_))));
    }
}
