//! Placeholder camera images for synthetic bundles, so that image-based
//! backends have pixels to crop.

use std::path::Path;

use image::{Rgb, RgbImage};
use talk2bev::bundle::SceneBundle;
use talk2bev::captioning::SceneScript;
use talk2bev::geometry::CorrespondenceConfig;

fn color_rgb(name: &str) -> [u8; 3] {
    match name {
        "white" => [235, 235, 235],
        "black" => [25, 25, 25],
        "silver" => [190, 190, 200],
        "red" => [200, 30, 30],
        "blue" => [30, 60, 200],
        "grey" => [120, 120, 120],
        "yellow" => [230, 200, 30],
        "green" => [40, 150, 60],
        _ => [160, 80, 160],
    }
}

/// Writes one PNG per camera: sky over road, with a filled box where each
/// ground-truth object appears in that camera.
pub fn write_camera_images(bundle: &SceneBundle, dir: &Path) -> Result<(), image::ImageError> {
    let script = SceneScript::from_bundle(bundle, &CorrespondenceConfig::default());
    let objects = bundle.gt_objects.as_deref().unwrap_or_default();
    for cam in &bundle.cameras {
        let Some(file) = bundle.image_paths.get(&cam.name) else { continue };
        let horizon = cam.image_h / 2;
        let mut img = RgbImage::from_fn(cam.image_w, cam.image_h, |_, y| {
            if y < horizon {
                Rgb([150, 190, 230])
            } else {
                Rgb([70, 70, 75])
            }
        });
        for o in objects {
            let Some([u0, v0, u1, v1]) = script.reference_bbox(o.object_id, &cam.name) else { continue };
            let color = o
                .extra
                .get("attributes")
                .and_then(|a| a.get("color"))
                .and_then(|c| c.as_str())
                .map(color_rgb)
                .unwrap_or([160, 80, 160]);
            for y in (v0.max(0.0) as u32)..(v1.min(cam.image_h as f64) as u32) {
                for x in (u0.max(0.0) as u32)..(u1.min(cam.image_w as f64) as u32) {
                    img.put_pixel(x, y, Rgb(color));
                }
            }
        }
        img.save(dir.join(file))?;
    }
    Ok(())
}
