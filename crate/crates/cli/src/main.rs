//! `holant`: classify signatures, decide complexity, evaluate partition
//! functions and verify gadgets. Output is JSON unless `--format text`.
//!
//! Exit codes: 0 success, 2 validation failure, 3 cap exceeded,
//! 4 verification mismatch.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::commands::EvalOptions;
use crate::failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "holant", version, about = "Exact counting for Boolean Holant problems")]
struct RunConfig {
    #[command(subcommand)]
    command: Command,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Print numbers as floating point instead of exact form.
    #[arg(long, global = true)]
    float: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Brute,
    Treewidth,
    Planar,
    Apex,
    Scg,
    Apexdp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Class {
    General,
    Planar,
    Tw,
    SingleCrossing,
    Apex,
    VortexNotPlanar,
    NoVortex,
}

impl Class {
    fn descriptor(self) -> &'static str {
        match self {
            Class::General => "general",
            Class::Planar => "planar",
            Class::Tw => "tw",
            Class::SingleCrossing => "single-crossing",
            Class::Apex => "apex",
            Class::VortexNotPlanar => "vortex-not-planar",
            Class::NoVortex => "no-vortex",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Affine / product / matchgate report for each signature in a file.
    Classify { file: PathBuf },
    /// Complexity verdict for a signature set over a graph class.
    Verdict {
        file: PathBuf,
        #[arg(long, value_enum)]
        class: Class,
        /// Maximum degree, required by the vortex classes.
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Evaluate the partition function of an instance.
    Eval {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Brute)]
        method: Method,
        /// Tree decomposition (JSON).
        #[arg(long)]
        td: Option<PathBuf>,
        /// Clockwise port order per vertex (JSON).
        #[arg(long)]
        embedding: Option<PathBuf>,
        /// Apex vertices for `--method apex`.
        #[arg(long, value_delimiter = ',')]
        apex: Vec<usize>,
        /// Torso size bound for `scg` and `apexdp`.
        #[arg(long, default_value_t = 3)]
        h: usize,
        /// Degree bound for `apexdp` (default: the maximum degree).
        #[arg(long)]
        degree: Option<usize>,
        /// Also evaluate by brute force and compare.
        #[arg(long)]
        cross_check: bool,
        /// Edge cap for brute-force evaluation.
        #[arg(long)]
        cap_edges: Option<usize>,
    },
    /// Verify a gadget plan against its target.
    Gadget {
        file: PathBuf,
        /// Family members to check.
        #[arg(long, default_value_t = 4)]
        members: usize,
    },
    /// Print the plan file of a built-in construction.
    Plan {
        #[arg(value_parser = ["gg1", "gadget-00010", "gadget-001", "crossing", "signed-crossing", "case"])]
        name: String,
        /// Input signature for `case`.
        #[arg(long)]
        signature: Option<String>,
    },
}

fn run(cfg: &RunConfig) -> Result<Value, Failure> {
    match &cfg.command {
        Command::Classify { file } => commands::classify(file, cfg.float),
        Command::Verdict { file, class, degree } => commands::verdict_cmd(file, class.descriptor(), *degree),
        Command::Eval { file, method, td, embedding, apex, h, degree, cross_check, cap_edges } => {
            let method = match method {
                Method::Brute => "brute",
                Method::Treewidth => "treewidth",
                Method::Planar => "planar",
                Method::Apex => "apex",
                Method::Scg => "scg",
                Method::Apexdp => "apexdp",
            };
            let opts = EvalOptions {
                method,
                td: td.as_deref(),
                embedding: embedding.as_deref(),
                apex: apex.clone(),
                h: *h,
                degree: *degree,
                cross_check: *cross_check,
                float: cfg.float,
                cap_edges: *cap_edges,
            };
            commands::eval(file, &opts)
        }
        Command::Gadget { file, members } => commands::gadget(file, *members, cfg.float),
        Command::Plan { name, signature } => commands::plan(name, signature.as_deref()),
    }
}

fn text(v: &Value, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                if x.is_object() || x.is_array() {
                    out.push_str(&format!("{pad}{k}:\n"));
                    text(x, indent + 2, out);
                } else {
                    out.push_str(&format!("{pad}{k}: {}\n", scalar_text(x)));
                }
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                if x.is_object() || x.is_array() {
                    out.push_str(&format!("{pad}- [{i}]\n"));
                    text(x, indent + 2, out);
                } else {
                    out.push_str(&format!("{pad}- {}\n", scalar_text(x)));
                }
            }
        }
        other => out.push_str(&format!("{pad}{}\n", scalar_text(other))),
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render(v: &Value, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(v).expect("JSON values serialize"),
        Format::Text => {
            let mut s = String::new();
            text(v, 0, &mut s);
            s.trim_end().to_string()
        }
    }
}

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    match run(&cfg) {
        Ok(v) => {
            println!("{}", render(&v, cfg.format));
            ExitCode::SUCCESS
        }
        Err(f) => {
            let body = f
                .report
                .clone()
                .unwrap_or_else(|| serde_json::json!({ "error": { "kind": f.kind(), "message": f.message } }));
            println!("{}", render(&body, cfg.format));
            eprintln!("holant: {} failure", f.kind());
            ExitCode::from(f.code)
        }
    }
}
