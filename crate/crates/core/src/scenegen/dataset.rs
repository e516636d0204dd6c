//! Split generation, manifest files and sample loading.
//!
//! A dataset is a pure function of its config: per-sample scene and style
//! seeds are derived injectively from the master seed and a global sample
//! index, so splits can never share a scene seed and regeneration is
//! byte-identical. Sample files are independent, so rendering fans out to
//! worker threads; manifests are written by the single caller thread.

use super::realify::{realify, RealifyStyle};
use super::render::{derive_seed, render_synthetic, Scene, SceneConfig};
use super::{Domain, Result, Sample, SceneError};
use crate::tensor::{read_t2np_file, worker_threads, write_t2np_file, Tensor};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub master_seed: u64,
    pub count_syn: usize,
    pub count_real: usize,
    pub count_test: usize,
    pub scene: SceneConfig,
    pub overwrite: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            master_seed: 0,
            count_syn: 2000,
            count_real: 2000,
            count_test: 200,
            scene: SceneConfig::default(),
            overwrite: false,
        }
    }
}

impl DatasetConfig {
    /// Stable hash over every generation-relevant field.
    pub fn config_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64; // FNV offset
        let mut feed = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x100000001b3);
        };
        feed(self.master_seed);
        feed(self.count_syn as u64);
        feed(self.count_real as u64);
        feed(self.count_test as u64);
        feed(self.scene.height as u64);
        feed(self.scene.width as u64);
        feed(self.scene.shape_count.0 as u64);
        feed(self.scene.shape_count.1 as u64);
        feed(self.scene.depth_range.0.to_bits() as u64);
        feed(self.scene.depth_range.1.to_bits() as u64);
        feed(self.scene.d_cap.to_bits() as u64);
        h
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    /// Path relative to the dataset root.
    pub image_path: String,
    pub depth_path: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: String,
    pub domain: Domain,
    pub entries: Vec<ManifestEntry>,
    pub config_hash: u64,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const SCENE_SALT: u64 = 0x5343454E45;
const STYLE_SALT: u64 = 0x5354594C45;

/// Scene seed for a global sample index (syn first, then real-train, then
/// real-test). Injective in the index, so splits never share seeds.
pub fn scene_seed(master_seed: u64, global_index: u64) -> u64 {
    derive_seed(master_seed, SCENE_SALT, global_index)
}

/// Style seed for a global sample index.
pub fn style_seed(master_seed: u64, global_index: u64) -> u64 {
    derive_seed(master_seed, STYLE_SALT, global_index)
}

/// Splits in generation order with (name, domain, has-training-depth).
pub const SPLITS: [(&str, Domain, bool); 3] = [
    ("syn_train", Domain::Synthetic, true),
    ("real_train", Domain::Real, false),
    ("real_test", Domain::Real, true),
];

fn write_sample(root: &Path, sample: &Sample, depth_dir: Option<&str>) -> Result<String> {
    let image_rel = format!("images/{}.t2np", sample.id);
    let sh = sample.image.shape().to_vec();
    let img = sample.image.to_vec();
    write_t2np_file(&root.join(&image_rel), &[("image", sh.as_slice(), img.as_slice())])?;
    if let Some(dir) = depth_dir {
        let depth = sample.depth.as_ref().expect("paired sample without depth");
        let depth_rel = format!("{dir}/{}.t2np", sample.id);
        let dsh = depth.shape().to_vec();
        let dv = depth.to_vec();
        write_t2np_file(&root.join(&depth_rel), &[("depth", dsh.as_slice(), dv.as_slice())])?;
    }
    Ok(image_rel)
}

/// Build one sample by global index. Synthetic indices render directly;
/// real indices render then pass through the style transform.
fn build_sample(config: &DatasetConfig, split: usize, index_in_split: usize) -> Sample {
    let (name, domain, _) = SPLITS[split];
    let global = match split {
        0 => index_in_split,
        1 => config.count_syn + index_in_split,
        _ => config.count_syn + config.count_real + index_in_split,
    } as u64;
    let seed = scene_seed(config.master_seed, global);
    let id = format!("{}_{index_in_split:06}", short_prefix(name));
    let scene = Scene::draw(seed, &config.scene);
    let synthetic = render_synthetic(&scene, &id);
    match domain {
        Domain::Synthetic => synthetic,
        Domain::Real => {
            let style = RealifyStyle::from_seed(style_seed(config.master_seed, global));
            realify(&synthetic, &style).expect("synthetic input to realify")
        }
    }
}

fn short_prefix(split: &str) -> &'static str {
    match split {
        "syn_train" => "syn",
        "real_train" => "real",
        _ => "test",
    }
}

/// Generate all three splits under `out_dir`. Returns manifests in
/// [`SPLITS`] order.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<Vec<DatasetManifest>> {
    if out_dir.exists() {
        let non_empty = fs::read_dir(out_dir)?.next().is_some();
        if non_empty {
            if !config.overwrite {
                return Err(SceneError::OutputNotEmpty {
                    path: out_dir.display().to_string(),
                });
            }
            fs::remove_dir_all(out_dir)?;
        }
    }
    fs::create_dir_all(out_dir.join("images"))?;
    fs::create_dir_all(out_dir.join("depths"))?;
    fs::create_dir_all(out_dir.join("eval_depth"))?;

    let mut manifests = Vec::new();
    for (split_idx, (name, domain, has_depth)) in SPLITS.iter().enumerate() {
        let count = match split_idx {
            0 => config.count_syn,
            1 => config.count_real,
            _ => config.count_test,
        };
        let depth_dir = match (split_idx, has_depth) {
            (0, true) => Some("depths"),
            (2, true) => Some("eval_depth"),
            _ => None,
        };

        // Samples are independent; fan out across workers. Entry order is
        // fixed by index, so the manifest is identical however the work
        // was scheduled.
        let workers = worker_threads().min(count.max(1));
        let mut entries: Vec<Option<ManifestEntry>> = (0..count).map(|_| None).collect();
        if count > 0 {
            let chunk = count.div_ceil(workers);
            let mut slots: Vec<&mut [Option<ManifestEntry>]> = entries.chunks_mut(chunk).collect();
            std::thread::scope(|scope| -> Result<()> {
                let mut handles = Vec::new();
                for (wi, slot) in slots.iter_mut().enumerate() {
                    let first = wi * chunk;
                    let slot: &mut [Option<ManifestEntry>] = slot;
                    handles.push(scope.spawn(move || -> Result<()> {
                        for (offset, out) in slot.iter_mut().enumerate() {
                            let sample = build_sample(config, split_idx, first + offset);
                            let image_path = write_sample(out_dir, &sample, depth_dir)?;
                            let depth_path = depth_dir
                                .map(|dir| format!("{dir}/{}.t2np", sample.id));
                            *out = Some(ManifestEntry {
                                id: sample.id,
                                image_path,
                                depth_path,
                            });
                        }
                        Ok(())
                    }));
                }
                for h in handles {
                    h.join().expect("generation worker panicked")?;
                }
                Ok(())
            })?;
        }
        let entries: Vec<ManifestEntry> = entries.into_iter().map(|e| e.unwrap()).collect();

        let manifest = DatasetManifest {
            root: out_dir.to_path_buf(),
            split: name.to_string(),
            domain: *domain,
            entries,
            config_hash: config.config_hash(),
        };
        write_manifest(&manifest)?;
        manifests.push(manifest);
    }

    let meta = format!(
        "master_seed = {}\ncount_syn = {}\ncount_real = {}\ncount_test = {}\nheight = {}\nwidth = {}\nd_min = {}\nd_max = {}\nd_cap = {}\nconfig_hash = {:016x}\n",
        config.master_seed,
        config.count_syn,
        config.count_real,
        config.count_test,
        config.scene.height,
        config.scene.width,
        config.scene.depth_range.0,
        config.scene.depth_range.1,
        config.scene.d_cap,
        config.config_hash(),
    );
    fs::write(out_dir.join("dataset.meta"), meta)?;
    Ok(manifests)
}

fn write_manifest(manifest: &DatasetManifest) -> Result<()> {
    let mut text = String::new();
    for e in &manifest.entries {
        text.push_str(&e.id);
        text.push('\t');
        text.push_str(&e.image_path);
        text.push('\t');
        match &e.depth_path {
            Some(p) => text.push_str(p),
            None => text.push('-'),
        }
        text.push('\n');
    }
    fs::write(
        manifest.root.join(format!("{}.manifest", manifest.split)),
        text,
    )?;
    Ok(())
}

/// Read `<root>/<split>.manifest`. The domain is implied by the split name.
pub fn load_manifest(root: &Path, split: &str) -> Result<DatasetManifest> {
    let path = root.join(format!("{split}.manifest"));
    let text = fs::read_to_string(&path).map_err(|e| SceneError::BadManifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let domain = if split.starts_with("syn") {
        Domain::Synthetic
    } else {
        Domain::Real
    };
    let mut entries = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (id, image_path, depth) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(SceneError::BadManifest {
                    path: path.display().to_string(),
                    message: format!("line {} is not id<TAB>image<TAB>depth", ln + 1),
                })
            }
        };
        entries.push(ManifestEntry {
            id: id.to_string(),
            image_path: image_path.to_string(),
            depth_path: if depth == "-" { None } else { Some(depth.to_string()) },
        });
    }
    let config_hash = read_meta_hash(root).unwrap_or(0);
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        split: split.to_string(),
        domain,
        entries,
        config_hash,
    })
}

fn read_meta_hash(root: &Path) -> Option<u64> {
    let text = fs::read_to_string(root.join("dataset.meta")).ok()?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("config_hash = ") {
            return u64::from_str_radix(rest.trim(), 16).ok();
        }
    }
    None
}

/// Depth bounds recorded in `dataset.meta`: (d_min, d_max, d_cap).
pub fn read_meta_depth_range(root: &Path) -> Option<(f32, f32, f32)> {
    let text = fs::read_to_string(root.join("dataset.meta")).ok()?;
    let mut d_min = None;
    let mut d_max = None;
    let mut d_cap = None;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("d_min = ") {
            d_min = rest.trim().parse().ok();
        } else if let Some(rest) = line.strip_prefix("d_max = ") {
            d_max = rest.trim().parse().ok();
        } else if let Some(rest) = line.strip_prefix("d_cap = ") {
            d_cap = rest.trim().parse().ok();
        }
    }
    Some((d_min?, d_max?, d_cap?))
}

fn load_tensor(root: &Path, rel: &str, want: &str, id: &str) -> Result<Tensor<f32>> {
    let path = root.join(rel);
    let entries = read_t2np_file(&path).map_err(|e| SceneError::BadSample {
        id: id.to_string(),
        message: format!("{}: {e}", path.display()),
    })?;
    let (name, dims, values) = entries.into_iter().next().ok_or_else(|| SceneError::BadSample {
        id: id.to_string(),
        message: format!("{}: empty container", path.display()),
    })?;
    if name != want {
        return Err(SceneError::BadSample {
            id: id.to_string(),
            message: format!("{}: expected entry '{want}', found '{name}'", path.display()),
        });
    }
    Tensor::from_vec(&dims, values).map_err(|e| SceneError::BadSample {
        id: id.to_string(),
        message: e.to_string(),
    })
}

/// Load samples by manifest index. Decoding is bit-exact: the stored f32
/// payloads become tensor contents unchanged.
pub fn load_batch(manifest: &DatasetManifest, indices: &[usize]) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let entry = manifest.entries.get(i).ok_or_else(|| SceneError::BadSample {
            id: format!("index {i}"),
            message: format!("out of range for split of {} samples", manifest.len()),
        })?;
        let image = load_tensor(&manifest.root, &entry.image_path, "image", &entry.id)?;
        let depth = match &entry.depth_path {
            Some(p) => Some(load_tensor(&manifest.root, p, "depth", &entry.id)?),
            None => None,
        };
        out.push(Sample {
            id: entry.id.clone(),
            domain: manifest.domain,
            image,
            depth,
        });
    }
    Ok(out)
}
