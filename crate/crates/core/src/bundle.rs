//! The serialized, viewer-ready layout (`evoembed/1`).
//!
//! Bundles are UTF-8 JSON. Every floating-point value is written in
//! exponent form with 17 significant digits, which round-trips `f64`
//! exactly and keeps output byte-stable for a fixed seed.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{EvoError, Result};
use crate::model::{EmbedConfig, EmbeddingState, EvolutionDataset, InstanceMeta, Layout, RepresentationKind};
use crate::optimizer::LossBreakdown;
use crate::pathway::{
    cluster_by_iteration_keyword, extract_pathways, filter_by_length_percentile, interpolate_to_centroids,
    spline_control, ClusterTable, Pathway, DEFAULT_MIN_PTS, DEFAULT_TENSION,
};
use crate::quality::QualityReport;

pub const FORMAT_VERSION: &str = "evoembed/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleElement {
    pub instance_id: String,
    pub iteration_label: i64,
    pub rank: usize,
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub theta: f64,
    pub prompt: String,
    pub keywords: Vec<String>,
    /// Thumbnail path relative to the bundle directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlePathway {
    #[serde(flatten)]
    pub pathway: Pathway,
    /// Control points after centroid interpolation, when enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay_points: Option<Vec<[f64; 2]>>,
    /// Whether the pathway passes the length-percentile filter.
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub tension: f64,
    pub interp: f64,
    pub len_pct: [f64; 2],
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings { tension: DEFAULT_TENSION, interp: 0.0, len_pct: [0.0, 100.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutBundle {
    pub format_version: String,
    pub config: EmbedConfig,
    pub num_instances: usize,
    pub iteration_labels: Vec<i64>,
    pub offsets: Vec<f64>,
    pub elements: Vec<BundleElement>,
    #[serde(default)]
    pub pathways: Vec<BundlePathway>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<ClusterTable>,
    pub render: RenderSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baseline_quality: Vec<QualityReport>,
}

/// Pathway and bundling options for [`LayoutBundle::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct BundleOptions {
    /// Compute pathways and clusters; `false` leaves both empty.
    pub pathways: bool,
    pub eps: f64,
    pub min_pts: usize,
    pub render: RenderSettings,
    /// Per-instance thumbnail directory, relative to the bundle.
    pub thumbnail_dirs: Vec<Option<String>>,
}

impl BundleOptions {
    pub fn for_config(config: &EmbedConfig) -> Self {
        BundleOptions {
            pathways: true,
            eps: crate::pathway::default_eps(config.spacing),
            min_pts: DEFAULT_MIN_PTS,
            render: RenderSettings::default(),
            thumbnail_dirs: Vec::new(),
        }
    }
}

impl LayoutBundle {
    /// Instances are stored in `instance_id` order; pathway and cluster
    /// member indices refer to that order.
    pub fn build(
        dataset: &EvolutionDataset,
        state: &EmbeddingState,
        config: &EmbedConfig,
        options: &BundleOptions,
    ) -> Result<Self> {
        let n = dataset.num_instances;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| dataset.instance_meta[a].instance_id.cmp(&dataset.instance_meta[b].instance_id));
        let mut elements = Vec::with_capacity(state.coords.len());
        for k in 0..state.num_iterations() {
            for &i in &order {
                let e = state.element_index(k, i);
                let [x, y] = state.xy(e);
                let [r, theta] = state.polar(e);
                let meta = &dataset.instance_meta[i];
                let label = dataset.iteration_labels[k];
                elements.push(BundleElement {
                    instance_id: meta.instance_id.clone(),
                    iteration_label: label,
                    rank: k,
                    // Keep both views exactly consistent in the file.
                    x: if state.layout == Layout::Radial { r * theta.cos() } else { x },
                    y: if state.layout == Layout::Radial { r * theta.sin() } else { y },
                    r,
                    theta,
                    prompt: meta.prompt.clone(),
                    keywords: meta.keywords.iter().cloned().collect(),
                    thumbnail: options
                        .thumbnail_dirs
                        .get(i)
                        .cloned()
                        .flatten()
                        .map(|d| format!("{}/{label}.png", d.trim_end_matches('/'))),
                });
            }
        }
        let mut bundle = LayoutBundle {
            format_version: FORMAT_VERSION.to_string(),
            config: config.clone(),
            num_instances: n,
            iteration_labels: dataset.iteration_labels.clone(),
            offsets: state.offsets.clone(),
            elements,
            pathways: Vec::new(),
            clusters: None,
            render: options.render.clone(),
            quality: None,
            baseline_quality: Vec::new(),
        };
        bundle.set_pathways(options)?;
        Ok(bundle)
    }

    /// Recomputes pathways and clusters from the stored coordinates.
    pub fn set_pathways(&mut self, options: &BundleOptions) -> Result<()> {
        self.render = options.render.clone();
        if !options.pathways {
            self.pathways.clear();
            self.clusters = None;
            return Ok(());
        }
        let (meta, state) = self.restore()?;
        let all = extract_pathways(&state, &meta);
        let [lo, hi] = options.render.len_pct;
        let kept: BTreeSet<String> = filter_by_length_percentile(&all, lo, hi)?
            .into_iter()
            .map(|p| p.instance_id)
            .collect();
        let clusters = cluster_by_iteration_keyword(&state, &meta, options.eps, options.min_pts)?;
        let overlay = if options.render.interp > 0.0 {
            Some(interpolate_to_centroids(&state, &clusters, options.render.interp)?)
        } else {
            None
        };
        self.pathways = all
            .into_iter()
            .enumerate()
            .map(|(i, p)| BundlePathway {
                visible: kept.contains(&p.instance_id),
                overlay_points: overlay
                    .as_ref()
                    .map(|o| spline_control(o, &state, i, options.render.tension).points),
                pathway: p,
            })
            .collect();
        self.clusters = Some(clusters);
        Ok(())
    }

    /// Metadata (without features) and a state at rest, both in the
    /// bundle's instance order.
    pub fn restore(&self) -> Result<(EvolutionDataset, EmbeddingState)> {
        let problems = self.validate();
        if !problems.is_empty() {
            return Err(EvoError::Validation(problems));
        }
        let n = self.num_instances;
        let instance_meta = self.elements[..n]
            .iter()
            .map(|el| InstanceMeta {
                instance_id: el.instance_id.clone(),
                prompt: el.prompt.clone(),
                keywords: el.keywords.iter().cloned().collect(),
            })
            .collect();
        let meta = EvolutionDataset {
            num_instances: n,
            iteration_labels: self.iteration_labels.clone(),
            feature_dim: 0,
            features: Vec::new(),
            instance_meta,
            representation_kind: RepresentationKind::default(),
        };
        let coords = self
            .elements
            .iter()
            .map(|el| match self.config.layout {
                Layout::Rectilinear => [el.x, el.y],
                Layout::Radial => [el.r, el.theta],
            })
            .collect();
        let state = EmbeddingState::from_coords(self.config.layout, n, coords, self.offsets.clone(), self.config.seed);
        Ok((meta, state))
    }

    /// The stored layout as a state indexed like `dataset`, after checking
    /// that shape, iteration labels and instance ids agree.
    pub fn state_for(&self, dataset: &EvolutionDataset) -> Result<EmbeddingState> {
        let mut problems = Vec::new();
        if dataset.num_instances != self.num_instances || dataset.iteration_labels != self.iteration_labels {
            problems.push(format!(
                "bundle holds {} instances x {} iterations {:?}, dataset has {} x {} {:?}",
                self.num_instances,
                self.num_iterations(),
                self.iteration_labels,
                dataset.num_instances,
                dataset.num_iterations(),
                dataset.iteration_labels
            ));
            return Err(EvoError::Validation(problems));
        }
        let (meta, stored) = self.restore()?;
        let position: HashMap<&str, usize> =
            meta.instance_meta.iter().enumerate().map(|(j, m)| (m.instance_id.as_str(), j)).collect();
        let mut source = Vec::with_capacity(dataset.num_instances);
        for m in &dataset.instance_meta {
            match position.get(m.instance_id.as_str()) {
                Some(&j) => source.push(j),
                None => problems.push(format!("instance {:?} is not in the bundle", m.instance_id)),
            }
        }
        if !problems.is_empty() {
            return Err(EvoError::Validation(problems));
        }
        let coords = (0..self.num_iterations())
            .flat_map(|k| source.iter().map(move |&j| (k, j)))
            .map(|(k, j)| stored.coords[stored.element_index(k, j)])
            .collect();
        Ok(EmbeddingState::from_coords(
            self.config.layout,
            self.num_instances,
            coords,
            self.offsets.clone(),
            self.config.seed,
        ))
    }

    pub fn num_iterations(&self) -> usize {
        self.iteration_labels.len()
    }

    /// Structural checks: version, element count and order, and agreement of
    /// the Cartesian and polar views (1e-9 relative).
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.format_version != FORMAT_VERSION {
            out.push(format!("format_version {:?} is not {FORMAT_VERSION:?}", self.format_version));
        }
        let want = self.num_instances * self.num_iterations();
        if self.elements.len() != want {
            out.push(format!("expected {want} elements, found {}", self.elements.len()));
        }
        for w in self.elements.windows(2) {
            if (w[0].rank, &w[0].instance_id) >= (w[1].rank, &w[1].instance_id) {
                out.push(format!("elements out of order at {} / {}", w[0].instance_id, w[1].instance_id));
                break;
            }
        }
        for el in &self.elements {
            let scale = el.r.abs().max(1.0);
            if (el.x - el.r * el.theta.cos()).abs() > 1e-9 * scale || (el.y - el.r * el.theta.sin()).abs() > 1e-9 * scale {
                out.push(format!("element {} rank {}: (x, y) and (r, theta) disagree", el.instance_id, el.rank));
            }
            if ![el.x, el.y, el.r, el.theta].iter().all(|v| v.is_finite()) {
                out.push(format!("element {} rank {}: non-finite coordinate", el.instance_id, el.rank));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits::default());
        self.serialize(&mut ser)?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: LayoutBundle = serde_json::from_str(text)?;
        Ok(bundle)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        fs::write(path, text).map_err(|e| EvoError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| EvoError::io(path, e))?;
        Self::from_json(&text).map_err(|e| EvoError::Format { path: path.to_path_buf(), message: e.to_string() })
    }
}

/// Pretty JSON with every `f64` rendered as `{:.16e}`.
#[derive(Default)]
pub struct SignificantDigits {
    pretty: PrettyFormatter<'static>,
}

impl Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}

/// `opt_iter,total,semantic,displacement,alignment` per optimization step.
pub fn loss_history_csv(history: &[LossBreakdown]) -> String {
    let mut out = String::from("opt_iter,total,semantic,displacement,alignment\n");
    for (it, l) in history.iter().enumerate() {
        let _ = writeln!(
            out,
            "{it},{:.16e},{:.16e},{:.16e},{:.16e}",
            l.total, l.semantic, l.displacement, l.alignment
        );
    }
    out
}
