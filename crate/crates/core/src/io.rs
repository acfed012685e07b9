//! Text formats for scenes, templates, matches and models.
//!
//! Scene file:
//! ```text
//! # width=640 height=480 k=2
//! 0 10.0 20.0 0.5 0.5
//! 1 30.0 40.0 0.1 0.9
//! ```
//! A template file is a scene file with an extra `# order: i0 i1 ...` line.
//! Legacy landmark files (bare `x y` rows, as in the CMU house sequence) are
//! accepted when the caller supplies the image size.
//!
//! Match file: one `template_index target_index` pair per line.
//!
//! Model file: JSON with `version`, `theta0`, `theta`, `p`, `feature_config`
//! and `scale_factors`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureConfig, WeightModel};
use crate::types::{Assignment, Point2, Scene, TemplateShape};

pub const MODEL_VERSION: u32 = 1;

/// Image size used for legacy landmark files that carry no header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegacyDims {
    pub width: f64,
    pub height: f64,
}

struct Header {
    width: f64,
    height: f64,
    k: usize,
}

fn parse_header(line: &str, lineno: usize) -> Result<Option<Header>> {
    let body = match line.trim().strip_prefix('#') {
        Some(b) => b.trim(),
        None => return Ok(None),
    };
    if !body.starts_with("width=") {
        return Ok(None);
    }
    let (mut width, mut height, mut k) = (None, None, None);
    for tok in body.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(lineno, format!("malformed header field `{tok}`")))?;
        match key {
            "width" => width = Some(parse_f64(value, lineno)?),
            "height" => height = Some(parse_f64(value, lineno)?),
            "k" => {
                k = Some(value.parse::<usize>().map_err(|_| {
                    Error::parse(lineno, format!("invalid descriptor dimension `{value}`"))
                })?)
            }
            other => return Err(Error::parse(lineno, format!("unknown header field `{other}`"))),
        }
    }
    let width = width.ok_or_else(|| Error::parse(lineno, "header lacks width"))?;
    let height = height.ok_or_else(|| Error::parse(lineno, "header lacks height"))?;
    if !(width > 0.0) || !(height > 0.0) {
        return Err(Error::parse(
            lineno,
            format!("width and height must be positive (got {width} x {height})"),
        ));
    }
    Ok(Some(Header {
        width,
        height,
        k: k.unwrap_or(0),
    }))
}

fn parse_f64(tok: &str, lineno: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(lineno, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(lineno, format!("non-finite number `{tok}`")));
    }
    Ok(v)
}

fn parse_order(line: &str) -> Option<&str> {
    line.trim()
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|b| b.strip_prefix("order:"))
}

struct Parsed {
    scene: Scene,
    order: Option<Vec<usize>>,
}

fn parse_scene_text(text: &str, id: &str, legacy: Option<LegacyDims>) -> Result<Parsed> {
    let mut header: Option<Header> = None;
    let mut saw_content = false;
    let mut points = Vec::new();
    let mut descriptors: Vec<Vec<f64>> = Vec::new();
    let mut order = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if !saw_content && header.is_none() {
                if let Some(h) = parse_header(line, lineno)? {
                    header = Some(h);
                    saw_content = true;
                    continue;
                }
            }
            if let Some(rest) = parse_order(line) {
                let mut o = Vec::new();
                for tok in rest.split_whitespace() {
                    o.push(tok.parse::<usize>().map_err(|_| {
                        Error::parse(lineno, format!("invalid order index `{tok}`"))
                    })?);
                }
                order = Some(o);
            }
            continue;
        }
        saw_content = true;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match &header {
            Some(h) => {
                if toks.len() < 3 {
                    return Err(Error::parse(lineno, "expected `<id> <x> <y> [descriptors]`"));
                }
                let found = toks.len() - 3;
                if found != h.k {
                    return Err(Error::InconsistentDescriptorDim {
                        line: lineno,
                        expected: h.k,
                        found,
                    });
                }
                points.push(Point2::new(
                    parse_f64(toks[1], lineno)?,
                    parse_f64(toks[2], lineno)?,
                ));
                if h.k > 0 {
                    descriptors.push(
                        toks[3..]
                            .iter()
                            .map(|t| parse_f64(t, lineno))
                            .collect::<Result<_>>()?,
                    );
                }
            }
            None => {
                if legacy.is_none() {
                    return Err(Error::parse(
                        lineno,
                        "missing `# width=<W> height=<H> k=<K>` header (pass the image size \
                         to read legacy landmark files)",
                    ));
                }
                if toks.len() != 2 {
                    return Err(Error::parse(lineno, "expected `<x> <y>` in a legacy landmark file"));
                }
                points.push(Point2::new(
                    parse_f64(toks[0], lineno)?,
                    parse_f64(toks[1], lineno)?,
                ));
            }
        }
    }

    let (width, height, k) = match (&header, legacy) {
        (Some(h), _) => (h.width, h.height, h.k),
        (None, Some(d)) => (d.width, d.height, 0),
        (None, None) => return Err(Error::parse(1, "empty scene file")),
    };
    if points.is_empty() {
        return Err(Error::InvalidScene(format!("scene `{id}` has no points")));
    }
    let descriptors = (k > 0).then_some(descriptors);
    Ok(Parsed {
        scene: Scene::new(id, points, descriptors, width, height)?,
        order,
    })
}

/// Parses a scene from text. The descriptor dimension comes from the header.
pub fn parse_scene(text: &str, id: &str, legacy: Option<LegacyDims>) -> Result<Scene> {
    parse_scene_text(text, id, legacy).map(|p| p.scene)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::file(path, e))
}

fn id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn load_scene(path: impl AsRef<Path>, legacy: Option<LegacyDims>) -> Result<Scene> {
    let path = path.as_ref();
    parse_scene(&read(path)?, &id_of(path), legacy)
}

/// Parses a template file. Without an `# order:` line every point is used.
pub fn parse_template(text: &str, id: &str, legacy: Option<LegacyDims>) -> Result<TemplateShape> {
    let parsed = parse_scene_text(text, id, legacy)?;
    let scene = Arc::new(parsed.scene);
    match parsed.order {
        Some(order) => TemplateShape::new(scene, order),
        None => TemplateShape::whole_scene(scene),
    }
}

pub fn load_template(path: impl AsRef<Path>, legacy: Option<LegacyDims>) -> Result<TemplateShape> {
    let path = path.as_ref();
    parse_template(&read(path)?, &id_of(path), legacy)
}

pub fn format_scene(scene: &Scene) -> String {
    let k = scene.descriptor_dim().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# width={} height={} k={k}",
        scene.width(),
        scene.height()
    );
    for (i, p) in scene.points().iter().enumerate() {
        let _ = write!(out, "{i} {} {}", p.x, p.y);
        if let Some(d) = scene.descriptor(i) {
            for v in d {
                let _ = write!(out, " {v}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn format_template(template: &TemplateShape) -> String {
    let mut out = format_scene(template.scene());
    out.push_str("# order:");
    for i in template.order() {
        let _ = write!(out, " {i}");
    }
    out.push('\n');
    out
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_scene(scene)).map_err(|e| Error::file(path, e))
}

pub fn save_template(template: &TemplateShape, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_template(template)).map_err(|e| Error::file(path, e))
}

/// Parses a match file, checking that every template index appears exactly
/// once and every target index is in range.
pub fn parse_matches(text: &str, template_len: usize, target_len: usize) -> Result<Assignment> {
    let mut map: Vec<Option<usize>> = vec![None; template_len];
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::parse(lineno, "expected `<template_index> <target_index>`"));
        }
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::parse(lineno, format!("invalid index `{t}`")))
        };
        let (s, u) = (parse(toks[0])?, parse(toks[1])?);
        if s >= template_len {
            return Err(Error::parse(
                lineno,
                format!("template index {s} out of range for {template_len} template points"),
            ));
        }
        if u >= target_len {
            return Err(Error::parse(
                lineno,
                format!("target index {u} out of range for {target_len} target points"),
            ));
        }
        if map[s].replace(u).is_some() {
            return Err(Error::parse(lineno, format!("duplicate template index {s}")));
        }
    }
    let map = map
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            u.ok_or_else(|| Error::InvalidAssignment(format!("missing template index {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Assignment::new(map, target_len)
}

pub fn load_matches(
    path: impl AsRef<Path>,
    template_len: usize,
    target_len: usize,
) -> Result<Assignment> {
    let path = path.as_ref();
    parse_matches(&read(path)?, template_len, target_len)
}

pub fn format_matches(assignment: &Assignment) -> String {
    let mut out = String::new();
    for (s, u) in assignment.as_slice().iter().enumerate() {
        let _ = writeln!(out, "{s} {u}");
    }
    out
}

pub fn save_matches(assignment: &Assignment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matches(assignment)).map_err(|e| Error::file(path, e))
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    theta0: Vec<f64>,
    theta: Vec<f64>,
    p: usize,
    feature_config: FeatureConfig,
    scale_factors: Vec<f64>,
}

pub fn model_to_json(model: &WeightModel) -> Result<String> {
    model.validate()?;
    let file = ModelFile {
        version: MODEL_VERSION,
        theta0: model.theta0.clone(),
        theta: model.theta.clone(),
        p: model.p,
        feature_config: model.feature_config.clone(),
        scale_factors: model.scale_factors.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<WeightModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            expected: MODEL_VERSION,
            found: file.version,
        });
    }
    let model = WeightModel {
        theta0: file.theta0,
        theta: file.theta,
        p: file.p,
        feature_config: file.feature_config,
        scale_factors: file.scale_factors,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &WeightModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut json = model_to_json(model)?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::file(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<WeightModel> {
    let path = path.as_ref();
    model_from_json(&read(path)?)
}
