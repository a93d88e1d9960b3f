//! Run-directory layout and the readers / writers for each artifact.
//!
//! ```text
//! <out>/scene.json          scene points and colours
//! <out>/trajectory.jsonl    ground-truth camera per frame
//! <out>/split.json          {train: [...], test: [...]}
//! <out>/frames/NNNN.scimg   rendered image
//! <out>/frames/NNNN.scmap   ground-truth coordinate map
//! <out>/hierarchy.json      label hierarchy
//! <out>/checkpoint.hscp     network parameters
//! <out>/train_log.jsonl     one loss report per iteration
//! <out>/localize.jsonl      estimated pose per test frame
//! <out>/corr/NNNN.corr      correspondences per test frame
//! <out>/metrics.json        summary metrics
//! <out>/frames.csv          per-frame errors
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use scloc_core::geometry::{read_trajectory, write_trajectory, ScenePose, TrajectoryRecord, Vec3};
use scloc_core::hierarchy::{CoordMap, LabelHierarchy};
use scloc_core::image::Image;
use scloc_core::net::{config_hash, read_checkpoint, write_checkpoint, ConditionedNet, NetConfig};
use scloc_core::synth::{RenderedFrame, SceneModel};

use crate::CliError;

pub struct RunDir {
    pub root: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One line of `localize.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizeRecord {
    pub frame_id: usize,
    /// (w, x, y, z) rotation and translation of the camera-to-world pose;
    /// absent when localisation failed.
    pub q: Option<[f64; 4]>,
    pub t: Option<[f64; 3]>,
    pub n_corr: usize,
    pub ransac_score: f64,
    pub refined: bool,
    pub subregion_hits: usize,
    pub subregion_total: usize,
    pub error: Option<String>,
}

impl LocalizeRecord {
    pub fn pose(&self) -> Option<ScenePose> {
        let (q, t) = (self.q?, self.t?);
        let rotation = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        Some(ScenePose::new(rotation, Vec3::new(t[0], t[1], t[2])))
    }

    pub fn set_pose(&mut self, pose: &ScenePose) {
        let q = pose.rotation.quaternion();
        self.q = Some([q.w, q.i, q.j, q.k]);
        self.t = Some([pose.translation.x, pose.translation.y, pose.translation.z]);
    }
}

pub fn missing(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::MissingInput(format!("{}: {e}", path.display()))
}

pub fn io_other(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

impl RunDir {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_other(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn frame_path(&self, i: usize, ext: &str) -> PathBuf {
        self.root.join("frames").join(format!("{i:04}.{ext}"))
    }

    pub fn corr_path(&self, i: usize) -> PathBuf {
        self.root.join("corr").join(format!("{i:04}.corr"))
    }

    fn open(&self, name: &str) -> Result<BufReader<File>, CliError> {
        let p = self.path(name);
        File::open(&p)
            .map(BufReader::new)
            .map_err(|e| missing(&p, e))
    }

    pub fn read_text(&self, name: &str) -> Result<String, CliError> {
        let p = self.path(name);
        fs::read_to_string(&p).map_err(|e| missing(&p, e))
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io_other(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| io_other(&p, e))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
        self.write_bytes(name, format!("{text}\n").as_bytes())
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T, CliError> {
        let text = self.read_text(name)?;
        serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{name}: {e}")))
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        for r in rows {
            serde_json::to_writer(&mut buf, r).map_err(|e| CliError::Other(e.to_string()))?;
            buf.push(b'\n');
        }
        self.write_bytes(name, &buf)
    }

    pub fn read_jsonl<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<Vec<T>, CliError> {
        self.read_text(name)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| CliError::Other(format!("{name}: {e}"))))
            .collect()
    }

    pub fn write_scene(&self, scene: &SceneModel) -> Result<(), CliError> {
        let text = scene
            .to_json()
            .map_err(|e| CliError::Other(e.to_string()))?;
        self.write_bytes("scene.json", text.as_bytes())
    }

    pub fn read_scene(&self) -> Result<SceneModel, CliError> {
        SceneModel::from_json(&self.read_text("scene.json")?)
            .map_err(|e| CliError::Other(format!("scene.json: {e}")))
    }

    pub fn write_trajectory(&self, records: &[TrajectoryRecord]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, records).map_err(|e| CliError::Other(e.to_string()))?;
        self.write_bytes("trajectory.jsonl", &buf)
    }

    pub fn read_trajectory(&self) -> Result<Vec<TrajectoryRecord>, CliError> {
        read_trajectory(self.open("trajectory.jsonl")?)
            .map_err(|e| CliError::Other(format!("trajectory.jsonl: {e}")))
    }

    pub fn write_frame(&self, i: usize, frame: &RenderedFrame) -> Result<(), CliError> {
        let mut img = Vec::new();
        frame
            .image
            .write_to(&mut img)
            .map_err(|e| CliError::Other(e.to_string()))?;
        self.write_bytes(&format!("frames/{i:04}.scimg"), &img)?;
        let mut map = Vec::new();
        frame
            .coord_map()
            .write_to(&mut map)
            .map_err(|e| CliError::Other(e.to_string()))?;
        self.write_bytes(&format!("frames/{i:04}.scmap"), &map)
    }

    pub fn read_frame(&self, rec: &TrajectoryRecord) -> Result<RenderedFrame, CliError> {
        let ip = self.frame_path(rec.frame_id, "scimg");
        let image = Image::read_from(
            &mut File::open(&ip)
                .map(BufReader::new)
                .map_err(|e| missing(&ip, e))?,
        )
        .map_err(|e| io_other(&ip, e))?;
        let mp = self.frame_path(rec.frame_id, "scmap");
        let map = CoordMap::read_from(
            &mut File::open(&mp)
                .map(BufReader::new)
                .map_err(|e| missing(&mp, e))?,
        )
        .map_err(|e| io_other(&mp, e))?;
        let bad = |e: scloc_core::geometry::GeometryError| {
            CliError::Other(format!("trajectory.jsonl: {e}"))
        };
        let grid = rec.grid().map_err(bad)?;
        let intr = rec.intrinsics().map_err(bad)?;
        RenderedFrame::from_parts(image, map, rec.pose(), intr, grid).map_err(|e| io_other(&ip, e))
    }

    /// Frames listed in `ids`, in that order, with their ids.
    pub fn read_frames(&self, ids: &[usize]) -> Result<Vec<(usize, RenderedFrame)>, CliError> {
        let records = self.read_trajectory()?;
        ids.iter()
            .map(|&id| {
                let rec = records.iter().find(|r| r.frame_id == id).ok_or_else(|| {
                    CliError::MissingInput(format!("frame {id} not in trajectory.jsonl"))
                })?;
                Ok((id, self.read_frame(rec)?))
            })
            .collect()
    }

    pub fn read_hierarchy(&self) -> Result<LabelHierarchy, CliError> {
        LabelHierarchy::from_json(&self.read_text("hierarchy.json")?)
            .map_err(|e| CliError::Other(format!("hierarchy.json: {e}")))
    }

    pub fn write_checkpoint(&self, net: &ConditionedNet) -> Result<(), CliError> {
        let p = self.path("checkpoint.hscp");
        let mut w = BufWriter::new(File::create(&p).map_err(|e| io_other(&p, e))?);
        write_checkpoint(net, net_hash(&net.config), &mut w).map_err(|e| io_other(&p, e))?;
        w.flush().map_err(|e| io_other(&p, e))
    }

    /// Loads the checkpoint for `config`, refusing one written for another
    /// network layout.
    pub fn read_checkpoint(&self, config: NetConfig) -> Result<ConditionedNet, CliError> {
        let p = self.path("checkpoint.hscp");
        let bytes = fs::read(&p).map_err(|e| missing(&p, e))?;
        let stored = bytes
            .get(6..14)
            .map(|h| u64::from_le_bytes(h.try_into().unwrap()));
        if stored.is_some_and(|h| h != net_hash(&config)) {
            return Err(CliError::Config(format!(
                "{} was written for a different network configuration",
                p.display()
            )));
        }
        let (net, _) = read_checkpoint(config, &mut &bytes[..]).map_err(|e| io_other(&p, e))?;
        Ok(net)
    }
}

pub fn net_hash(config: &NetConfig) -> u64 {
    config_hash(&serde_json::to_vec(config).expect("config serialises"))
}
