//! Command implementations. Each returns a JSON report; failures carry their
//! exit code.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};

use holant::apexdp::evaluate_apexdp;
use holant::classify::{is_affine, is_matchgate, is_product, m_minus_a_form, symmetric_matchgate_form, verdict, ClassDescriptor};
use holant::instance::{csp_to_holant, HolantInstance, InstanceFile, BRUTE_EDGE_CAP};
use holant::planar::{
    default_lookup, eval_apex_matchgate_holant, eval_planar_matchgate_holant, trace_faces, ApexConfig, Embedding,
};
use holant::reductions::{
    build_case_gadget, crossing_layout, crossing_signature, gadget_00010, gadget_001, gg1, signed_crossing_signature,
    GadgetPlan, PlanFile, ReductionError,
};
use holant::scg::evaluate_scg;
use holant::signature::bits_of;
use holant::treewidth::{dp_evaluate, heuristic_td, TreeDecomposition, UGraph};
use holant::{Scalar, Signature};

use crate::failure::Failure;

pub type Outcome = Result<Value, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

pub fn num(s: &Scalar, float: bool) -> Value {
    Value::String(if float { s.to_float().to_string() } else { s.to_string() })
}

/// One signature per line in display form (`[1,0,2]`, `table2(1,0,0,1)`,
/// `=3`); blank lines and `#` comments are skipped.
pub fn parse_signature_file(text: &str) -> Result<Vec<(usize, Signature)>, Failure> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Signature = line.parse().map_err(|e| Failure::validation(format!("line {}: {e}", i + 1)))?;
        out.push((i + 1, f));
    }
    if out.is_empty() {
        return Err(Failure::validation("no signatures in input"));
    }
    Ok(out)
}

pub fn classify(path: &Path, float: bool) -> Outcome {
    let mut rows = Vec::new();
    for (line, f) in parse_signature_file(&read(path)?)? {
        let affine = is_affine(&f).map(|c| {
            let ok = c.reconstruct() == f;
            json!({ "certificate": c, "reconstructs": ok })
        });
        let product = match is_product(&f) {
            Ok(Some(c)) => {
                let ok = c.reconstruct() == f;
                json!({ "member": true, "certificate": c, "reconstructs": ok })
            }
            Ok(None) => json!({ "member": false }),
            Err(e) => json!({ "member": "unknown", "reason": e.to_string() }),
        };
        let sym = f.as_symmetric();
        let form = sym.as_ref().and_then(symmetric_matchgate_form);
        let case = sym.as_ref().and_then(m_minus_a_form);
        rows.push(json!({
            "line": line,
            "signature": f.to_string(),
            "arity": f.arity(),
            "affine": affine.is_some(),
            "affine_certificate": affine,
            "product": product,
            "matchgate": is_matchgate(&f),
            "matchgate_form": form.map(|m| json!({ "form": m.form, "r": num(&m.r, float), "c": num(&m.c, float) })),
            "m_minus_a_case": case,
        }));
    }
    Ok(json!({ "command": "classify", "signatures": rows }))
}

pub fn verdict_cmd(path: &Path, class: &str, degree: Option<usize>) -> Outcome {
    let class: ClassDescriptor = class.parse()?;
    let fs: Vec<Signature> = parse_signature_file(&read(path)?)?.into_iter().map(|p| p.1).collect();
    let v = verdict(&fs, class, degree)?;
    Ok(json!({
        "command": "verdict",
        "class": class.to_string(),
        "degree": degree,
        "outcome": v.outcome,
        "witness": v.witness,
    }))
}

/// `#CSP(F)` input: `scope` lists variable indices, one per signature input.
#[derive(Deserialize)]
struct CspFile {
    variables: usize,
    constraints: Vec<CspConstraint>,
}

#[derive(Deserialize)]
struct CspConstraint {
    signature: Signature,
    scope: Vec<usize>,
}

/// Reads a Holant instance file, or a `#CSP` file (recognized by its
/// `constraints` key) translated to its bipartite Holant form.
pub fn load_instance(path: &Path) -> Result<(HolantInstance, &'static str), Failure> {
    let text = read(path)?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    if raw.get("constraints").is_some() {
        let csp: CspFile = serde_json::from_value(raw)?;
        let cons: Vec<(Signature, Vec<usize>)> = csp.constraints.into_iter().map(|c| (c.signature, c.scope)).collect();
        return Ok((csp_to_holant(csp.variables, &cons)?, "csp"));
    }
    let file: InstanceFile = serde_json::from_value(raw)?;
    if !file.dangling.is_empty() {
        return Err(Failure::validation("instance has dangling edges; use the gadget command"));
    }
    Ok((file.to_instance()?, "holant"))
}

pub struct EvalOptions<'a> {
    pub method: &'a str,
    pub td: Option<&'a Path>,
    pub embedding: Option<&'a Path>,
    pub apex: Vec<usize>,
    pub h: usize,
    pub degree: Option<usize>,
    pub cross_check: bool,
    pub float: bool,
    pub cap_edges: Option<usize>,
}

fn need_td(o: &EvalOptions) -> Result<TreeDecomposition, Failure> {
    let path = o.td.ok_or_else(|| Failure::validation(format!("method {} needs --td", o.method)))?;
    read_json(path)
}

fn embedding(o: &EvalOptions, inst: &HolantInstance) -> Result<(Embedding, &'static str), Failure> {
    match o.embedding {
        Some(p) => Ok((read_json(p)?, "file")),
        None => Ok((Embedding::identity(inst), "identity")),
    }
}

pub fn eval(path: &Path, o: &EvalOptions) -> Outcome {
    let (inst, kind) = load_instance(path)?;
    inst.validate()?;
    let cap = o.cap_edges.unwrap_or(BRUTE_EDGE_CAP);
    let (value, trace) = match o.method {
        "brute" => (inst.brute_force_z_capped(cap)?, json!({ "assignments": format!("2^{}", inst.num_edges()) })),
        "treewidth" => {
            let (td, source) = match o.td {
                Some(_) => (need_td(o)?, "file"),
                None => (heuristic_td(&UGraph::incidence(&inst)), "heuristic"),
            };
            let trace = json!({ "decomposition": source, "graph": "incidence", "width": td.width() });
            (dp_evaluate(&inst, &td)?, trace)
        }
        "planar" => {
            let (emb, source) = embedding(o, &inst)?;
            let (g, r) = emb.rotation_system(&inst)?;
            let faces = trace_faces(&g, &r)?;
            let z = eval_planar_matchgate_holant(&inst, &emb, default_lookup)?;
            let trace = json!({
                "algorithm": "fkt",
                "embedding": source,
                "faces": faces.faces.len(),
                "components": faces.components,
            });
            (z, trace)
        }
        "apex" => {
            if o.apex.is_empty() {
                return Err(Failure::validation("method apex needs --apex"));
            }
            let (emb, source) = embedding(o, &inst)?;
            let z = eval_apex_matchgate_holant(&inst, &o.apex, &emb, default_lookup, ApexConfig::default())?;
            (z, json!({ "algorithm": "fkt", "embedding": source, "apex": o.apex }))
        }
        "scg" => {
            let out = evaluate_scg(&inst, &need_td(o)?, o.h)?;
            (out.value.clone(), json!({ "h": o.h, "root_method": out.root_method, "steps": out.steps }))
        }
        "apexdp" => {
            let k = o.degree.unwrap_or_else(|| inst.vertices.iter().map(|v| v.signature.arity()).max().unwrap_or(0));
            let out = evaluate_apexdp(&inst, &need_td(o)?, o.h, k)?;
            (out.value.clone(), json!({ "h": o.h, "degree": k, "steps": out.steps }))
        }
        other => return Err(Failure::validation(format!("unknown method {other:?}"))),
    };
    let mut report = json!({
        "command": "eval",
        "input": kind,
        "method": o.method,
        "vertices": inst.num_vertices(),
        "edges": inst.num_edges(),
        "value": num(&value, o.float),
        "trace": trace,
    });
    if o.cross_check {
        let check = match inst.brute_force_z_capped(cap) {
            Ok(b) => {
                let agree = if value.is_exact() && b.is_exact() { b == value } else { b.approx_eq(&value, 1e-9) };
                json!({ "brute": num(&b, o.float), "agree": agree })
            }
            Err(e) => json!({ "skipped": e.to_string() }),
        };
        let bad = check.get("agree") == Some(&Value::Bool(false));
        report["cross_check"] = check;
        if bad {
            return Err(Failure::mismatch_report(report));
        }
    }
    Ok(report)
}

fn bits(idx: usize, k: usize) -> String {
    bits_of(idx, k).iter().map(|b| char::from(b'0' + b)).collect()
}

/// Entries where `realized` differs from `c·target`, with `c` taken at the
/// first nonzero entry of `target`.
fn mismatches(realized: &Signature, target: &Signature, float: bool) -> Vec<Value> {
    let k = target.arity();
    let c = target
        .support()
        .next()
        .and_then(|p| realized.get(p).try_div(target.get(p)).ok())
        .unwrap_or_else(Scalar::zero);
    (0..realized.table().len())
        .filter_map(|i| {
            let want = c.try_mul(target.get(i)).ok()?;
            (want != *realized.get(i)).then(|| {
                json!({ "input": bits(i, k), "realized": num(realized.get(i), float), "expected": num(&want, float) })
            })
        })
        .collect()
}

pub fn gadget(path: &Path, members: usize, float: bool) -> Outcome {
    let file: PlanFile = read_json(path)?;
    let plan = file.to_plan()?;
    match &plan {
        GadgetPlan::Concrete { gadget, target } => {
            if gadget.dangling.len() != target.arity() {
                return Err(Failure::mismatch(format!(
                    "gadget has {} dangling edges, target arity {}",
                    gadget.dangling.len(),
                    target.arity()
                )));
            }
            let realized = gadget.signature_with(holant::reductions::exact_z)?;
            let scalar = target.equal_up_to_scalar(&realized);
            let report = json!({
                "command": "gadget",
                "kind": "concrete",
                "vertices": gadget.instance.num_vertices(),
                "edges": gadget.instance.num_edges(),
                "target": target.to_string(),
                "realized": realized.to_string(),
                "scalar": scalar.as_ref().map(|c| num(c, float)),
                "pass": scalar.is_some(),
                "mismatches": mismatches(&realized, target, float),
            });
            if scalar.is_none() {
                return Err(Failure::mismatch_report(report));
            }
            Ok(report)
        }
        GadgetPlan::Family(f) => {
            let target = f.target()?.to_string();
            match f.points(members, holant::reductions::exact_z) {
                Ok(pts) => Ok(json!({
                    "command": "gadget",
                    "kind": "family",
                    "target": target,
                    "pass": true,
                    "members": pts.iter().enumerate().map(|(i, (l, x))| {
                        json!({ "k": i + 1, "lambda": num(l, float), "x": num(x, float) })
                    }).collect::<Vec<_>>(),
                })),
                Err(e @ (ReductionError::Collision(..) | ReductionError::OffFamily { .. })) => {
                    let report = json!({
                        "command": "gadget",
                        "kind": "family",
                        "target": target,
                        "pass": false,
                        "error": e.to_string(),
                    });
                    Err(Failure::mismatch_report(report))
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

/// Plan files for the built-in constructions.
pub fn plan(name: &str, signature: Option<&str>) -> Outcome {
    let concrete = |gadget, target| GadgetPlan::Concrete { gadget, target };
    let plan = match name {
        "gg1" => concrete(gg1(), Signature::sym(&[1, 0, 2])),
        "gadget-00010" => concrete(gadget_00010(), Signature::sym(&[0, 0, 0, 1, 0])),
        "gadget-001" => concrete(gadget_001(), Signature::sym(&[0, 0, 1])),
        "crossing" => concrete(crossing_layout(), crossing_signature()),
        "signed-crossing" => concrete(crossing_layout(), signed_crossing_signature()),
        "case" => {
            let text = signature.ok_or_else(|| Failure::validation("plan case needs --signature"))?;
            let f: Signature = text.parse()?;
            let sym = f.as_symmetric().ok_or_else(|| Failure::validation("signature is not symmetric"))?;
            let case = m_minus_a_form(&sym).ok_or_else(|| Failure::validation(format!("{f} is not in M minus A")))?;
            build_case_gadget(case, &sym)?
        }
        other => return Err(Failure::validation(format!("unknown plan {other:?}"))),
    };
    Ok(serde_json::to_value(PlanFile::from_plan(&plan))?)
}
