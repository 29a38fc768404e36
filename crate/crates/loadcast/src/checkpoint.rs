//! Model checkpoints and the prepared-data cache.
//!
//! Both files are little-endian binary with explicit lengths:
//!
//!   LFCK: magic, version, kind, config echo (TOML), optional
//!         standardization stats, forecaster record block, and for
//!         framework checkpoints the weighter-frozen flag plus the
//!         correction record block.
//!   LFPD: magic, version, config echo, schema (TOML), stats, embedded
//!         features, standardized target, timestamps, split window starts.
//!
//! Values are stored as 64-bit reals, so a load round-trips forecasts
//! bit-identically. Each checkpoint gets a parallel human-readable
//! manifest (`<file>.manifest`) listing name, shape and checksum per
//! parameter record.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::correction::CorrectionModel;
use crate::data::{DatasetSplit, FeatureSchema, Prepared, StandardStats};
use crate::error::CheckpointError;
use crate::model::ModelConfig;
use crate::params::ParamGroup;
use crate::ForecastModel;
use crate::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LFCK";
pub const CACHE_MAGIC: &[u8; 4] = b"LFPD";
pub const FORMAT_VERSION: u32 = 1;

/// What a checkpoint carries: a single forecaster, or the full framework
/// with the transfer-initialized corrector.
pub struct ModelBundle {
    /// Echo of the configuration the models were built/trained with.
    pub config_toml: String,
    pub stats: Option<StandardStats>,
    pub forecaster: ForecastModel,
    pub correction: Option<CorrectionModel<f64>>,
}

// ---------------------------------------------------------------------------
// Byte-level helpers
// ---------------------------------------------------------------------------

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn string(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn f64_slice(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }

    fn u64_slice(&mut self, vs: &[usize]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.u64(v as u64);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Corrupt(format!(
                "needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, CheckpointError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize, CheckpointError> {
        let n = self.u64()?;
        if n > (1 << 40) {
            return Err(CheckpointError::Corrupt(format!(
                "implausible {what} length {n}"
            )));
        }
        Ok(n as usize)
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.len("string")?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CheckpointError::Corrupt("invalid UTF-8 string".into()))
    }

    fn f64_vec(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.len("array")?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn usize_vec(&mut self) -> Result<Vec<usize>, CheckpointError> {
        let n = self.len("array")?;
        (0..n).map(|_| self.u64().map(|v| v as usize)).collect()
    }

    fn finish(&self) -> Result<(), CheckpointError> {
        if self.pos != self.buf.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Model records
// ---------------------------------------------------------------------------

fn write_model(w: &mut Writer, model: &ForecastModel) {
    let cfg_toml = toml::to_string(&model.cfg).expect("model config serializes");
    w.string(&cfg_toml);
    w.u8(model.trained as u8);
    w.u64(model.params.len() as u64);
    for p in model.params.iter() {
        w.string(&p.name);
        w.u8(p.trainable as u8);
        w.u64(p.tensor.shape().len() as u64);
        for &d in p.tensor.shape() {
            w.u64(d as u64);
        }
        for &v in p.tensor.data() {
            w.f64(v);
        }
    }
}

fn read_model(r: &mut Reader) -> Result<ForecastModel, CheckpointError> {
    let cfg_toml = r.string()?;
    let cfg: ModelConfig = toml::from_str(&cfg_toml)
        .map_err(|e| CheckpointError::Corrupt(format!("bad model config: {e}")))?;
    let trained = r.u8()? != 0;
    let mut model = ForecastModel::zeroed(cfg)
        .map_err(|e| CheckpointError::Corrupt(format!("bad model dimensions: {e}")))?;
    // zeroed() may freeze the weighter when biases are disabled; stored
    // flags below are authoritative.
    let count = r.len("parameter count")?;
    if count != model.params.len() {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} parameter records, found {count}",
            model.params.len()
        )));
    }
    for _ in 0..count {
        let name = r.string()?;
        let trainable = r.u8()? != 0;
        let ndim = r.len("rank")?;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(r.f64()?);
        }
        let idx = model.params.index(&name).ok_or_else(|| {
            CheckpointError::Corrupt(format!("unknown parameter record `{name}`"))
        })?;
        let p = model.params.get_mut(idx);
        if p.tensor.shape() != shape.as_slice() {
            return Err(CheckpointError::Corrupt(format!(
                "parameter `{name}` has shape {:?}, expected {:?}",
                shape,
                p.tensor.shape()
            )));
        }
        p.tensor = Tensor::from_vec(&shape, data);
        p.trainable = trainable;
    }
    model.trained = trained;
    Ok(model)
}

fn write_stats(w: &mut Writer, stats: &StandardStats) {
    w.f64_slice(&stats.feature_mean);
    w.f64_slice(&stats.feature_std);
    w.f64(stats.target_mean);
    w.f64(stats.target_std);
}

fn read_stats(r: &mut Reader) -> Result<StandardStats, CheckpointError> {
    Ok(StandardStats {
        feature_mean: r.f64_vec()?,
        feature_std: r.f64_vec()?,
        target_mean: r.f64()?,
        target_std: r.f64()?,
    })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Serializes the bundle; the same bundle always yields the same bytes.
pub fn checkpoint_to_bytes(bundle: &ModelBundle) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(bundle.correction.is_some() as u8);
    w.string(&bundle.config_toml);
    match &bundle.stats {
        Some(s) => {
            w.u8(1);
            write_stats(&mut w, s);
        }
        None => w.u8(0),
    }
    write_model(&mut w, &bundle.forecaster);
    if let Some(c) = &bundle.correction {
        let frozen = c
            .model
            .params
            .iter()
            .filter(|p| p.group == ParamGroup::Weighter)
            .all(|p| !p.trainable);
        w.u8(frozen as u8);
        write_model(&mut w, &c.model);
    }
    w.buf
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ModelBundle, CheckpointError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic { expected: "LFCK" });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::BadVersion {
            got: version,
            supported: FORMAT_VERSION,
        });
    }
    let has_correction = r.u8()? != 0;
    let config_toml = r.string()?;
    let stats = if r.u8()? != 0 {
        Some(read_stats(&mut r)?)
    } else {
        None
    };
    let forecaster = read_model(&mut r)?;
    let correction = if has_correction {
        let frozen_flag = r.u8()? != 0;
        let model = read_model(&mut r)?;
        let actually_frozen = model
            .params
            .iter()
            .filter(|p| p.group == ParamGroup::Weighter)
            .all(|p| !p.trainable);
        if frozen_flag != actually_frozen {
            return Err(CheckpointError::Corrupt(
                "weighter-frozen flag disagrees with parameter records".into(),
            ));
        }
        Some(CorrectionModel { model })
    } else {
        None
    };
    r.finish()?;
    Ok(ModelBundle {
        config_toml,
        stats,
        forecaster,
        correction,
    })
}

/// Writes the checkpoint and its `<file>.manifest` companion.
pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<(), CheckpointError> {
    let bytes = checkpoint_to_bytes(bundle);
    fs::write(path, &bytes).map_err(|e| io_err(path, e))?;

    let manifest_path = manifest_path(path);
    let mut out = String::new();
    out.push_str(&format!(
        "loadcast checkpoint v{FORMAT_VERSION} ({} bytes)\n",
        bytes.len()
    ));
    let section = |label: &str, model: &ForecastModel, out: &mut String| {
        out.push_str(&format!("[{label}]\n"));
        for p in model.params.iter() {
            out.push_str(&format!(
                "{:<12} shape={:?} trainable={} checksum={:016x}\n",
                p.name,
                p.tensor.shape(),
                p.trainable,
                p.tensor.checksum()
            ));
        }
    };
    section("forecaster", &bundle.forecaster, &mut out);
    if let Some(c) = &bundle.correction {
        section("correction", &c.model, &mut out);
    }
    let mut f = fs::File::create(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| io_err(&manifest_path, e))?;
    Ok(())
}

pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".manifest");
    std::path::PathBuf::from(s)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle, CheckpointError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    checkpoint_from_bytes(&bytes)
}

// ---------------------------------------------------------------------------
// Prepared-data cache
// ---------------------------------------------------------------------------

/// The prepared stream plus its split, as written by `prepare`.
pub struct PreparedCache {
    pub config_toml: String,
    pub prepared: Prepared,
    pub split: DatasetSplit,
}

pub fn cache_to_bytes(cache: &PreparedCache) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(CACHE_MAGIC);
    w.u32(FORMAT_VERSION);
    w.string(&cache.config_toml);
    let schema_toml = toml::to_string(&cache.prepared.schema).expect("schema serializes");
    w.string(&schema_toml);
    write_stats(&mut w, &cache.prepared.stats);
    let p = &cache.prepared;
    w.u64(p.rows() as u64);
    w.u64(p.width() as u64);
    for &v in p.features.data() {
        w.f64(v);
    }
    w.f64_slice(&p.target_std);
    w.u64(p.timestamps.len() as u64);
    for ts in &p.timestamps {
        w.i64(ts.and_utc().timestamp());
    }
    w.u64_slice(&cache.split.train);
    w.u64_slice(&cache.split.ec_train);
    w.u64_slice(&cache.split.validation);
    w.u64_slice(&cache.split.test);
    w.buf
}

pub fn cache_from_bytes(bytes: &[u8]) -> Result<PreparedCache, CheckpointError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != CACHE_MAGIC {
        return Err(CheckpointError::BadMagic { expected: "LFPD" });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::BadVersion {
            got: version,
            supported: FORMAT_VERSION,
        });
    }
    let config_toml = r.string()?;
    let schema_toml = r.string()?;
    let schema: FeatureSchema = toml::from_str(&schema_toml)
        .map_err(|e| CheckpointError::Corrupt(format!("bad schema: {e}")))?;
    let stats = read_stats(&mut r)?;
    let rows = r.len("rows")?;
    let width = r.len("width")?;
    if width != schema.width() {
        return Err(CheckpointError::Corrupt(format!(
            "cache width {width} does not match schema width {}",
            schema.width()
        )));
    }
    let mut data = Vec::with_capacity(rows * width);
    for _ in 0..rows * width {
        data.push(r.f64()?);
    }
    let target_std = r.f64_vec()?;
    if target_std.len() != rows {
        return Err(CheckpointError::Corrupt("target length mismatch".into()));
    }
    let n_ts = r.len("timestamps")?;
    if n_ts != rows {
        return Err(CheckpointError::Corrupt("timestamp length mismatch".into()));
    }
    let mut timestamps: Vec<NaiveDateTime> = Vec::with_capacity(n_ts);
    for _ in 0..n_ts {
        let secs = r.i64()?;
        let ts = DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| CheckpointError::Corrupt(format!("bad timestamp {secs}")))?;
        timestamps.push(ts.naive_utc());
    }
    let split = DatasetSplit {
        train: r.usize_vec()?,
        ec_train: r.usize_vec()?,
        validation: r.usize_vec()?,
        test: r.usize_vec()?,
    };
    r.finish()?;
    Ok(PreparedCache {
        config_toml,
        prepared: Prepared {
            schema,
            features: Tensor::from_vec(&[rows, width], data),
            target_std,
            timestamps,
            stats,
        },
        split,
    })
}

pub fn save_cache(cache: &PreparedCache, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, cache_to_bytes(cache)).map_err(|e| io_err(path, e))
}

pub fn load_cache(path: &Path) -> Result<PreparedCache, CheckpointError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    cache_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tiny_config, CellKind};

    fn bundle() -> ModelBundle {
        let mut forecaster = ForecastModel::new(tiny_config(CellKind::Lstm), 17).unwrap();
        forecaster.trained = true;
        let correction = crate::correction::transfer_init(&forecaster).unwrap();
        ModelBundle {
            config_toml: "seed = 17\n".into(),
            stats: Some(StandardStats {
                feature_mean: vec![0.5; 5],
                feature_std: vec![2.0; 5],
                target_mean: 100.0,
                target_std: 10.0,
            }),
            forecaster,
            correction: Some(correction),
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let b = bundle();
        let bytes = checkpoint_to_bytes(&b);
        let loaded = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(
            b.forecaster.params.checksum(),
            loaded.forecaster.params.checksum()
        );
        assert_eq!(
            b.correction.as_ref().unwrap().model.params.checksum(),
            loaded.correction.as_ref().unwrap().model.params.checksum()
        );
        assert!(loaded.forecaster.trained);
        assert_eq!(loaded.stats.as_ref().unwrap().target_mean, 100.0);
        // Frozen flags survive.
        for p in loaded.correction.unwrap().model.params.iter() {
            assert_eq!(p.trainable, p.group != ParamGroup::Weighter);
        }
    }

    #[test]
    fn bytes_are_stable() {
        let b = bundle();
        assert_eq!(checkpoint_to_bytes(&b), checkpoint_to_bytes(&b));
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = checkpoint_to_bytes(&bundle());
        for cut in [3, 9, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                checkpoint_from_bytes(&bytes[..cut]).is_err(),
                "cut at {cut} not detected"
            );
        }
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let mut bytes = checkpoint_to_bytes(&bundle());
        bytes[0] = b'X';
        assert!(matches!(
            checkpoint_from_bytes(&bytes),
            Err(CheckpointError::BadMagic { .. })
        ));
        let mut bytes = checkpoint_to_bytes(&bundle());
        bytes[4] = 99;
        assert!(matches!(
            checkpoint_from_bytes(&bytes),
            Err(CheckpointError::BadVersion { got: 99, .. })
        ));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = checkpoint_to_bytes(&bundle());
        bytes.push(0);
        assert!(checkpoint_from_bytes(&bytes).is_err());
    }
}
