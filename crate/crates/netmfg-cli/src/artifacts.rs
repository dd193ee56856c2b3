//! Artifact writers: CSV and JSON files, plus a manifest with SHA-256
//! hashes of every file and of the scenario text.
//!
//! Floats are written with 17 significant digits so that values round-trip
//! exactly; nothing time- or machine-dependent enters the files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use netmfg_core::continuity::FluxSeries;
use netmfg_core::geometry::{NetPoint, Network};
use netmfg_core::measure::Marginal;
use netmfg_core::trajectory::Trajectory;
use netmfg_core::{SpaceTimeGrid, ValueField};

use crate::error::CliError;

/// Round-trip exact float formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct ArtifactWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        fs::write(self.dir.join(name), content)?;
        self.files
            .insert(name.to_string(), hex_sha256(content.as_bytes()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        self.write_text(name, &(text + "\n"))
    }

    pub fn write_value_field(
        &mut self,
        name: &str,
        g: &Network,
        vf: &ValueField,
    ) -> Result<(), CliError> {
        let mut out = String::from("edge,arc_coord,time,u,du\n");
        for row in vf.export_rows(g) {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.edge,
                fmt_f64(row.arc_coord),
                fmt_f64(row.time),
                fmt_f64(row.u),
                fmt_f64(row.du)
            ));
        }
        self.write_text(name, &out)
    }

    pub fn write_trajectory(
        &mut self,
        name: &str,
        g: &Network,
        grid: &SpaceTimeGrid,
        tr: &Trajectory,
    ) -> Result<(), CliError> {
        let mut out = String::from("time,edge_id,arc_coord,speed\n");
        let speeds = tr
            .speeds(g, grid.dt())
            .map_err(|e| CliError::Invariant(e.to_string()))?;
        for (k, p) in tr.points.iter().enumerate() {
            let time = grid.time(tr.start_slice + k);
            let speed = if k < speeds.len() { speeds[k] } else { 0.0 };
            match *p {
                NetPoint::OnEdge { edge, s } => out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_f64(time),
                    edge.0,
                    fmt_f64(s),
                    fmt_f64(speed)
                )),
                NetPoint::Vertex(v) => out.push_str(&format!(
                    "{},VERTEX{},{},{}\n",
                    fmt_f64(time),
                    v.0,
                    fmt_f64(0.0),
                    fmt_f64(speed)
                )),
            }
        }
        self.write_text(name, &out)
    }

    pub fn write_marginals(
        &mut self,
        name: &str,
        grid: &SpaceTimeGrid,
        marginals: &[Marginal],
    ) -> Result<(), CliError> {
        let mut out = String::from("time,kind,id,arc_coord,weight\n");
        for (k, m) in marginals.iter().enumerate() {
            let time = grid.time(k);
            for &(p, w) in &m.atoms {
                match p {
                    NetPoint::OnEdge { edge, s } => out.push_str(&format!(
                        "{},edge,{},{},{}\n",
                        fmt_f64(time),
                        edge.0,
                        fmt_f64(s),
                        fmt_f64(w)
                    )),
                    NetPoint::Vertex(v) => out.push_str(&format!(
                        "{},vertex,{},{},{}\n",
                        fmt_f64(time),
                        v.0,
                        fmt_f64(0.0),
                        fmt_f64(w)
                    )),
                }
            }
        }
        self.write_text(name, &out)
    }

    pub fn write_flux(
        &mut self,
        name: &str,
        grid: &SpaceTimeGrid,
        fluxes: &[FluxSeries],
    ) -> Result<(), CliError> {
        let mut out = String::from("time,edge_id,q_mollified,q_counting,residual\n");
        for fs in fluxes {
            for k in 0..fs.mollified.len() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f64(grid.time(k)),
                    fs.edge.0,
                    fmt_f64(fs.mollified[k]),
                    fmt_f64(fs.counting[k]),
                    fmt_f64((fs.mollified[k] - fs.counting[k]).abs())
                ));
            }
        }
        self.write_text(name, &out)
    }

    /// Writes the manifest last; it lists every other file with its hash.
    pub fn finish(self, config_sha256: &str, seed: u64, threads: usize) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            schema: u32,
            config_sha256: &'a str,
            seed: u64,
            threads: usize,
            files: &'a BTreeMap<String, String>,
        }
        let manifest = Manifest {
            schema: 1,
            config_sha256,
            seed,
            threads,
            files: &self.files,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
