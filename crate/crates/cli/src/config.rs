//! Flat key=value configuration file handling. CLI flags override file
//! values; `--print-config` renders the effective configuration in the same
//! format the parser accepts.

use std::path::PathBuf;

use planocheck_core::pipeline::PipelineConfig;

#[derive(Default)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub out: Option<PathBuf>,
    pub overlay: Option<PathBuf>,
}


impl Config {
    /// Apply `key=value` lines. Blank lines and `#` comments are skipped;
    /// unknown keys and malformed values are errors.
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            self.set(key, value).map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
        }
        let g = &mut self.pipeline.grasp;
        match key {
            "appearance_tol" => g.appearance_tol = parse(key, value)?,
            "geometry_tol" => g.geometry_tol = parse(key, value)?,
            "restarts" => g.restarts = parse(key, value)?,
            "rcl_alpha" => g.rcl_alpha = parse(key, value)?,
            "max_local_moves" => g.max_local_moves = parse(key, value)?,
            "min_objects" => g.min_objects = parse(key, value)?,
            "min_words" => g.min_words = parse(key, value)?,
            "seed" => g.seed = parse(key, value)?,
            "max_per_region" => self.pipeline.partition.max_per_region = parse(key, value)?,
            "margin_frac" => self.pipeline.partition.margin_frac = parse(key, value)?,
            "redetect_coverage" => self.pipeline.redetect_coverage = parse(key, value)?,
            "refine" => self.pipeline.refine = parse(key, value)?,
            "jobs" => self.pipeline.jobs = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "overlay" => self.overlay = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Render the effective configuration as key=value lines.
    pub fn render(&self) -> String {
        let g = &self.pipeline.grasp;
        let mut s = String::new();
        s.push_str(&format!("appearance_tol={}\n", g.appearance_tol));
        s.push_str(&format!("geometry_tol={}\n", g.geometry_tol));
        s.push_str(&format!("restarts={}\n", g.restarts));
        s.push_str(&format!("rcl_alpha={}\n", g.rcl_alpha));
        s.push_str(&format!("max_local_moves={}\n", g.max_local_moves));
        s.push_str(&format!("min_objects={}\n", g.min_objects));
        s.push_str(&format!("min_words={}\n", g.min_words));
        s.push_str(&format!("seed={}\n", g.seed));
        s.push_str(&format!("max_per_region={}\n", self.pipeline.partition.max_per_region));
        s.push_str(&format!("margin_frac={}\n", self.pipeline.partition.margin_frac));
        s.push_str(&format!("redetect_coverage={}\n", self.pipeline.redetect_coverage));
        s.push_str(&format!("refine={}\n", self.pipeline.refine));
        s.push_str(&format!("jobs={}\n", self.pipeline.jobs));
        if let Some(out) = &self.out {
            s.push_str(&format!("out={}\n", out.display()));
        }
        if let Some(overlay) = &self.overlay {
            s.push_str(&format!("overlay={}\n", overlay.display()));
        }
        s
    }
}
