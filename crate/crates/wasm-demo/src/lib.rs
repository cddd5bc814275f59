//! WebAssembly bindings for the static demo page in `www/`.

use bdloss::boundary::{boundary_detector, gt_split_boundary};
use bdloss::edt::{edt_exact, DistanceMap, DistanceUnit};
use bdloss::fields::{softmax, LabelField3D, LogitField};
use bdloss::losses::{boundary_distance_loss, BoundaryLossConfig};
use bdloss::metrics::assd;
use bdloss::phantom::{generate, perturb_boundary, PhantomCase, PhantomDistribution, PhantomSpec};
use wasm_bindgen::prelude::*;

fn js(e: bdloss::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// One phantom, a shifted prediction of its split, and the loss of that
/// prediction.
#[wasm_bindgen]
pub struct Demo {
    case: PhantomCase,
    phi: DistanceMap,
    pred: LabelField3D,
    detector: Vec<f64>,
    loss: f64,
    assd_mm: f64,
}

#[wasm_bindgen]
impl Demo {
    /// Generates the phantom drawn from the default distribution with `seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Demo, JsError> {
        let spec = PhantomSpec::sample(seed, &PhantomDistribution::default());
        let case = generate(&spec).map_err(js)?;
        let phi = edt_exact(&gt_split_boundary(&case.labels), DistanceUnit::Voxels).map_err(js)?;
        let mut demo = Demo {
            pred: case.labels.clone(),
            case,
            phi,
            detector: Vec::new(),
            loss: 0.0,
            assd_mm: 0.0,
        };
        demo.predict(0, 8.0, 4.0)?;
        Ok(demo)
    }

    /// Moves the predicted split plane by `shift` voxels, softens it with
    /// logit `margin`, and evaluates the loss at temperature `tau`.
    pub fn predict(&mut self, shift: i32, margin: f64, tau: f64) -> Result<(), JsError> {
        let pred = perturb_boundary(&self.case, shift).map_err(js)?;
        let chans = (0..3u8)
            .map(|k| pred.data().iter().map(|&l| if l == k { margin } else { 0.0 }).collect())
            .collect();
        let logits = LogitField::new(pred.dims(), pred.spacing(), chans).map_err(js)?;
        let cfg = BoundaryLossConfig {
            tau,
            ..Default::default()
        };
        self.loss = boundary_distance_loss(&logits, &self.phi, &cfg).map_err(js)?.value;
        let p = softmax(&logits).map_err(js)?;
        let b = boundary_detector(&p.channel_field(1), &p.channel_field(2)).map_err(js)?;
        self.detector = b.0.into_data();
        self.assd_mm = assd(&gt_split_boundary(&pred), &gt_split_boundary(&self.case.labels), pred.spacing())
            .map_err(js)?
            .as_f64();
        self.pred = pred;
        Ok(())
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn assd_mm(&self) -> f64 {
        self.assd_mm
    }

    pub fn width(&self) -> usize {
        self.case.image.dims()[0]
    }

    pub fn height(&self) -> usize {
        self.case.image.dims()[1]
    }

    pub fn depth(&self) -> usize {
        self.case.image.dims()[2]
    }

    /// Slice through the meatus point.
    pub fn meatus_slice(&self) -> usize {
        (self.case.spec.meatus_point[2].round().max(0.0) as usize).min(self.depth() - 1)
    }

    /// RGBA pixels of slice `z`. Layer 0: image with the predicted split
    /// (red intrameatal, blue extrameatal) and the true split boundary in
    /// green. Layer 1: the boundary detector. Layer 2: distance to the true
    /// split boundary.
    pub fn render(&self, z: usize, layer: u8) -> Vec<u8> {
        let [nx, ny, _] = self.case.image.dims();
        let z = z.min(self.depth() - 1);
        let off = nx * ny * z;
        let gt_edge = gt_split_boundary(&self.case.labels);
        let det_max = self.detector.iter().copied().fold(0.0, f64::max).max(1e-12);
        let phi = self.phi.values();
        let mut rgba = Vec::with_capacity(4 * nx * ny);
        for i in off..off + nx * ny {
            let px = match layer {
                1 => heat(self.detector[i] / det_max),
                2 => heat(1.0 - (phi[i] / 12.0).min(1.0)),
                _ => {
                    let g = (self.case.image.data()[i] / 1.2).clamp(0.0, 1.0);
                    let base = [g, g, g];
                    let tint = match self.pred.data()[i] {
                        1 => [1.0, 0.2, 0.2],
                        2 => [0.2, 0.4, 1.0],
                        _ => base,
                    };
                    if gt_edge.data()[i] == 1 {
                        [0.1, 1.0, 0.2]
                    } else {
                        [0.5 * (base[0] + tint[0]), 0.5 * (base[1] + tint[1]), 0.5 * (base[2] + tint[2])]
                    }
                }
            };
            rgba.extend(px.iter().map(|c| (c * 255.0).round() as u8));
            rgba.push(255);
        }
        rgba
    }
}

fn heat(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    [t.sqrt(), t * t, 0.3 * (1.0 - t)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifting_raises_loss_and_assd() {
        let mut d = Demo::new(3).unwrap();
        let (l0, a0) = (d.loss(), d.assd_mm());
        d.predict(3, 8.0, 4.0).unwrap();
        assert!(d.loss() > l0 && d.assd_mm() > a0, "{l0} {a0} {} {}", d.loss(), d.assd_mm());
        let px = d.render(d.meatus_slice(), 0);
        assert_eq!(px.len(), 4 * d.width() * d.height());
    }
}
