//! End-to-end scene completion from a single RGB-D frame.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::depth::{complete_depth_in_region, solve_region, NormalPredictor};
use crate::error::{Error, Result};
use crate::fusion::{fuse_with_input, ViewCloud};
use crate::geometry::{deproject, ColoredPointCloud, PartialView, RgbdFrame};
use crate::grid::{ColorImage, DepthMap, Mask};
use crate::inpaint::{
    fill_small_holes, inpaint_with_retry, make_prompt, Captioner, InpaintBackend, InpaintRequest,
    Prompt,
};
use crate::io::{write_depth_png, write_mask_png, write_ply, write_rgb_png, DEFAULT_DEPTH_SCALE};
use crate::masking::SurfaceMasker;
use crate::view_select::{select_viewpoints, SelectedView};

/// Per-view outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ViewReport {
    pub view_id: usize,
    pub direction_index: usize,
    pub angle_deg: f64,
    pub context: f64,
    pub masked_pixels: usize,
    pub predicted_points: usize,
    pub solver_iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Input points first, then the consistent predictions.
    pub cloud: ColoredPointCloud,
    pub input_points: usize,
    pub views: Vec<ViewReport>,
    pub prompt: String,
}

impl PipelineOutput {
    pub fn succeeded_views(&self) -> usize {
        self.views.iter().filter(|v| v.error.is_none()).count()
    }
}

/// Intermediate products of one viewpoint.
pub struct ViewProducts {
    pub selected: SelectedView,
    pub mask: Mask,
    pub partial: PartialView,
    pub inpainted: ColorImage,
    pub completed: DepthMap,
    /// Newly predicted points, in the input camera frame.
    pub cloud: ColoredPointCloud,
    pub solver_iterations: usize,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    backend: Arc<dyn InpaintBackend>,
    normals: Arc<dyn NormalPredictor>,
    captioner: Option<Arc<dyn Captioner>>,
}

impl Pipeline {
    pub fn from_config(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let backend = config.build_backend()?;
        let normals = config.build_normals()?;
        let captioner = config.build_captioner()?;
        Ok(Self {
            config,
            backend,
            normals,
            captioner,
        })
    }

    pub fn with_components(
        config: PipelineConfig,
        backend: Arc<dyn InpaintBackend>,
        normals: Arc<dyn NormalPredictor>,
        captioner: Option<Arc<dyn Captioner>>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            backend,
            normals,
            captioner,
        })
    }

    pub fn backend(&self) -> &Arc<dyn InpaintBackend> {
        &self.backend
    }

    /// Masking, inpainting and depth completion for one selected viewpoint.
    pub fn process_view(
        &self,
        frame: &RgbdFrame,
        masker: &SurfaceMasker,
        prompt: &Prompt,
        view_id: usize,
        selected: &SelectedView,
    ) -> Result<ViewProducts> {
        let k = frame.intrinsics;
        let masked = masker.render(&selected.pose);
        let (prefilled, remaining) = fill_small_holes(&masked.view, &masked.mask)?;
        let request = InpaintRequest::new(
            prefilled,
            remaining,
            prompt.clone(),
            self.config.seed.map(|s| s.wrapping_add(view_id as u64)),
        )?
        .with_view(view_id);
        let inpainted =
            inpaint_with_retry(&request, self.backend.as_ref(), &self.config.retry_policy())?;

        let maps = self.normals.predict(&inpainted, &masked.view.depth, &k)?;
        let region = solve_region(&masked.view.depth, &masked.mask)?;
        let solution = complete_depth_in_region(
            &masked.view.depth,
            &maps,
            &k,
            &self.config.depth,
            Some(&region),
        )?;

        let to_input = selected.pose.inverse();
        let mut cloud = ColoredPointCloud::default();
        for (i, &m) in masked.mask.iter().enumerate() {
            let z = solution.depth.as_slice()[i];
            if m && z > 0.0 && z.is_finite() {
                let (x, y) = masked.mask.coords(i);
                let p = k.deproject_pixel(x as f64, y as f64, z);
                cloud.push(to_input.apply(&p), *inpainted.get(x, y));
            }
        }
        Ok(ViewProducts {
            selected: selected.clone(),
            mask: masked.mask,
            partial: masked.view,
            inpainted,
            completed: solution.depth,
            cloud,
            solver_iterations: solution.iterations,
        })
    }

    pub fn run(&self, frame: &RgbdFrame) -> Result<PipelineOutput> {
        let input = deproject(frame);
        if input.is_empty() {
            return Err(Error::EmptyScene);
        }
        let selected = select_viewpoints(frame, &self.config.view_selection)?;
        let masker = SurfaceMasker::new(frame, &self.config.frustum)?;
        let prompt = make_prompt(&frame.rgb, self.captioner.as_deref());
        log::info!("prompt: {prompt}");

        let workers = self.config.workers.unwrap_or(selected.len()).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
        let results: Vec<Result<ViewProducts>> = pool.install(|| {
            selected
                .par_iter()
                .enumerate()
                .map(|(id, s)| self.process_view(frame, &masker, &prompt, id, s))
                .collect()
        });

        let debug = self.config.debug_dir.as_deref();
        if let Some(dir) = debug {
            std::fs::create_dir_all(dir)?;
        }
        let mut views = Vec::new();
        let mut reports = Vec::new();
        for (id, (sel, res)) in selected.iter().zip(results).enumerate() {
            let mut report = ViewReport {
                view_id: id,
                direction_index: sel.direction_index,
                angle_deg: sel.angle,
                context: sel.context,
                masked_pixels: 0,
                predicted_points: 0,
                solver_iterations: 0,
                error: None,
            };
            match res {
                Ok(p) => {
                    report.masked_pixels = p.mask.count_set();
                    report.predicted_points = p.cloud.len();
                    report.solver_iterations = p.solver_iterations;
                    if let Some(dir) = debug {
                        dump_view(dir, id, &p)?;
                    }
                    views.push(ViewCloud {
                        view_id: id,
                        cloud: p.cloud,
                    });
                }
                Err(e) => {
                    log::warn!("viewpoint {id} dropped: {e}");
                    report.error = Some(e.to_string());
                }
            }
            reports.push(report);
        }

        let required = self.config.fusion.min_other_views + 1;
        if selected.len() < required {
            log::warn!(
                "{} viewpoints cannot satisfy the {}-other-view consistency rule; output holds only input points",
                selected.len(),
                self.config.fusion.min_other_views
            );
        } else if views.len() < required {
            return Err(Error::TooFewViews {
                succeeded: views.len(),
                attempted: selected.len(),
                required,
            });
        }
        let cloud = fuse_with_input(&input, &views, &self.config.fusion);
        if let Some(dir) = debug {
            std::fs::write(
                dir.join("views.json"),
                serde_json::to_string_pretty(&reports)?,
            )?;
        }
        log::info!(
            "fused {} points ({} input, {} predicted) from {}/{} views",
            cloud.len(),
            input.len(),
            cloud.len() - input.len(),
            views.len(),
            selected.len()
        );
        Ok(PipelineOutput {
            cloud,
            input_points: input.len(),
            views: reports,
            prompt: prompt.to_string(),
        })
    }

    /// Runs and writes the fused cloud as binary PLY.
    pub fn run_to_file(&self, frame: &RgbdFrame, out: &Path) -> Result<PipelineOutput> {
        let output = self.run(frame)?;
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        write_ply(out, &output.cloud)?;
        Ok(output)
    }
}

fn dump_view(dir: &Path, id: usize, p: &ViewProducts) -> Result<()> {
    let d: PathBuf = dir.join(format!("view_{id:02}"));
    std::fs::create_dir_all(&d)?;
    write_mask_png(&d.join("mask.png"), &p.mask)?;
    write_rgb_png(&d.join("masked.png"), &p.partial.rgb)?;
    write_depth_png(
        &d.join("partial_depth.png"),
        &p.partial.depth,
        DEFAULT_DEPTH_SCALE,
    )?;
    write_rgb_png(&d.join("inpainted.png"), &p.inpainted)?;
    write_depth_png(
        &d.join("completed_depth.png"),
        &p.completed,
        DEFAULT_DEPTH_SCALE,
    )?;
    write_ply(&d.join("predicted.ply"), &p.cloud)?;
    Ok(())
}

/// Convenience wrapper: build from config and run.
pub fn run_pipeline(frame: &RgbdFrame, config: &PipelineConfig) -> Result<PipelineOutput> {
    Pipeline::from_config(config.clone())?.run(frame)
}
