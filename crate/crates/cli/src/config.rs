//! Run configuration file (TOML). Every key is optional; command-line flags
//! take precedence over the file, and the file over per-command defaults.
//!
//! ```toml
//! [mesh]
//! family = "square"      # square | distorted | nonconvex | voronoi | regular
//! n = 4                  # coarsest level (example1) or subdivisions (example2)
//! levels = 4             # number of refinement levels, each doubling n
//! seed = 1               # distorted / voronoi
//! lloyd = 10             # voronoi smoothing iterations
//! amplitude = 0.2        # distorted perturbation, fraction of the cell size
//!
//! [physics]
//! delta = 1.0            # damping; for example2 a value replaces the strip
//! sigma = 0.3
//! P = 1e-3
//! S = 1e-5
//!
//! [time]
//! dt = 1e-3              # omitted: dt <= h^2 for example1
//! T = 0.5
//! scheme = "nonlinear"   # nonlinear | linearized
//! newton_max_iterations = 25
//!
//! [output]
//! dir = "out"
//! condition = false      # Jacobian condition estimates
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub family: Option<String>,
    pub n: Option<usize>,
    pub levels: Option<usize>,
    pub seed: Option<u64>,
    pub lloyd: Option<usize>,
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    #[serde(rename = "P")]
    pub p: Option<f64>,
    #[serde(rename = "S")]
    pub s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    pub scheme: Option<String>,
    pub newton_max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub condition: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let text = r#"
            [mesh]
            family = "voronoi"
            n = 4
            levels = 3
            seed = 2
            lloyd = 5
            [physics]
            delta = 1.0
            sigma = 0.3
            P = 1e-3
            S = 1e-5
            [time]
            dt = 0.01
            T = 0.5
            scheme = "linearized"
            [output]
            dir = "out"
            condition = true
        "#;
        let c: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(c.mesh.levels, Some(3));
        assert_eq!(c.physics.p, Some(1e-3));
        assert_eq!(c.time.t_final, Some(0.5));
        assert_eq!(c.output.condition, Some(true));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[physics]\ngamma = 1.0\n").is_err());
        assert!(toml::from_str::<FileConfig>("[solver]\n").is_err());
        assert_eq!(toml::from_str::<FileConfig>("").unwrap(), FileConfig::default());
    }
}
