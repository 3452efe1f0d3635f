#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cae::config::RunConfig;
use cae::sandbox::ShimCommand;
use cae_core::model::{CodeSolution, FunctionUnit, Param, Signature};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn shim() -> ShimCommand {
    ShimCommand::new(env!("CARGO_BIN_EXE_cae-stub-shim"))
}

/// The bundled quadratic config with artifacts redirected to `out`.
pub fn quad_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&fixtures().join("quad/config.json")).expect("fixture config loads");
    cfg.output_dir = out.to_path_buf();
    cfg.shim = shim();
    cfg
}

pub fn quad_signature() -> Signature {
    Signature {
        params: ["x0", "A_list", "b_list", "max_iter", "tol"]
            .iter()
            .map(|n| Param {
                name: n.to_string(),
                ty: "any".into(),
            })
            .collect(),
        returns: "{x, trace}".into(),
    }
}

/// Single-unit quadratic candidate whose entrypoint holds `source`.
pub fn quad_candidate(source: &str) -> CodeSolution {
    let unit = FunctionUnit::new("lisr_k", quad_signature(), source, "").unwrap();
    CodeSolution::new(vec![unit], vec![], "lisr_k").unwrap()
}

pub fn tsp_candidate(source: &str) -> CodeSolution {
    let sig = Signature {
        params: ["algorithm", "edges"]
            .iter()
            .map(|n| Param {
                name: n.to_string(),
                ty: "any".into(),
            })
            .collect(),
        returns: "scores".into(),
    };
    let unit = FunctionUnit::new("guide", sig, source, "").unwrap();
    CodeSolution::new(vec![unit], vec![], "guide").unwrap()
}
