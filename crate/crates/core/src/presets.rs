//! Built-in tool universes.

use crate::cost::PriceTable;
use crate::universe::{DataKind, ToolSpec, ToolUniverse};

struct Profile {
    quality: f64,
    times: [f64; 4],
    cpu_cons: f64,
    gpu_cons: f64,
    cpu_inst: [f64; 4],
    gpu_inst: [f64; 4],
}

fn tool(id: &str, input: &str, output: &str, capability: &str, p: Profile) -> ToolSpec {
    ToolSpec {
        id: id.into(),
        inputs: vec![DataKind::new(input)],
        outputs: vec![DataKind::new(output)],
        capability: capability.into(),
        quality: p.quality,
        base_time_ms: p.times.to_vec(),
        cpu_cons_mb: p.cpu_cons,
        gpu_cons_mb: p.gpu_cons,
        cpu_inst_mb: p.cpu_inst.to_vec(),
        gpu_inst_mb: p.gpu_inst.to_vec(),
        noise_sigma: 0.05,
    }
}

fn kinds() -> Vec<DataKind> {
    vec![DataKind::new("image"), DataKind::new("text")]
}

/// Ten single-purpose tools over images and text: sentiment analysis,
/// summarization, translation, classification, detection, colorization,
/// super-resolution, denoising, deblurring and captioning.
pub fn opencatp10() -> ToolUniverse {
    let tools = vec![
        tool("captioning", "image", "text", "captioning", Profile {
            quality: 0.92,
            times: [90.0, 110.0, 130.0, 160.0],
            cpu_cons: 1024.0,
            gpu_cons: 2048.0,
            cpu_inst: [200.0, 260.0, 330.0, 420.0],
            gpu_inst: [800.0, 950.0, 1100.0, 1300.0],
        }),
        tool("classification", "image", "text", "classification", Profile {
            quality: 0.90,
            times: [40.0, 50.0, 60.0, 75.0],
            cpu_cons: 512.0,
            gpu_cons: 1024.0,
            cpu_inst: [100.0, 130.0, 170.0, 220.0],
            gpu_inst: [300.0, 380.0, 460.0, 560.0],
        }),
        tool("colorization", "image", "image", "colorization", Profile {
            quality: 0.85,
            times: [120.0, 150.0, 180.0, 230.0],
            cpu_cons: 1024.0,
            gpu_cons: 2048.0,
            cpu_inst: [250.0, 330.0, 420.0, 540.0],
            gpu_inst: [600.0, 760.0, 940.0, 1150.0],
        }),
        tool("deblurring", "image", "image", "deblurring", Profile {
            quality: 0.88,
            times: [150.0, 220.0, 290.0, 380.0],
            cpu_cons: 1024.0,
            gpu_cons: 3072.0,
            cpu_inst: [300.0, 420.0, 560.0, 720.0],
            gpu_inst: [1000.0, 1400.0, 1900.0, 2500.0],
        }),
        tool("denoising", "image", "image", "denoising", Profile {
            quality: 0.88,
            times: [130.0, 190.0, 260.0, 340.0],
            cpu_cons: 1024.0,
            gpu_cons: 3072.0,
            cpu_inst: [280.0, 390.0, 520.0, 680.0],
            gpu_inst: [900.0, 1300.0, 1750.0, 2300.0],
        }),
        tool("detection", "image", "text", "detection", Profile {
            quality: 0.87,
            times: [70.0, 85.0, 100.0, 120.0],
            cpu_cons: 1024.0,
            gpu_cons: 2048.0,
            cpu_inst: [180.0, 230.0, 290.0, 370.0],
            gpu_inst: [700.0, 850.0, 1000.0, 1200.0],
        }),
        tool("sentiment", "text", "text", "sentiment", Profile {
            quality: 0.93,
            times: [20.0, 25.0, 30.0, 36.0],
            cpu_cons: 512.0,
            gpu_cons: 0.0,
            cpu_inst: [60.0, 70.0, 80.0, 90.0],
            gpu_inst: [0.0; 4],
        }),
        tool("summarization", "text", "text", "summarization", Profile {
            quality: 0.90,
            times: [60.0, 80.0, 100.0, 130.0],
            cpu_cons: 1536.0,
            gpu_cons: 1024.0,
            cpu_inst: [150.0, 190.0, 240.0, 300.0],
            gpu_inst: [400.0, 480.0, 570.0, 680.0],
        }),
        tool("super_resolution", "image", "image", "super_resolution", Profile {
            quality: 0.90,
            times: [400.0, 700.0, 1100.0, 1600.0],
            cpu_cons: 2048.0,
            gpu_cons: 3072.0,
            cpu_inst: [800.0, 1300.0, 2000.0, 3000.0],
            gpu_inst: [3000.0, 4500.0, 6500.0, 9000.0],
        }),
        tool("translation", "text", "text", "translation", Profile {
            quality: 0.91,
            times: [45.0, 55.0, 65.0, 80.0],
            cpu_cons: 1024.0,
            gpu_cons: 1024.0,
            cpu_inst: [120.0, 150.0, 180.0, 220.0],
            gpu_inst: [350.0, 420.0, 500.0, 600.0],
        }),
    ];
    ToolUniverse::new(4, 10, kinds(), PriceTable::default(), tools).expect("preset is valid")
}

/// Five tools with a cheap and an expensive variant of deblurring and
/// captioning, plus one classifier.
pub fn desk5() -> ToolUniverse {
    let tools = vec![
        tool("caption_large", "image", "text", "caption", Profile {
            quality: 0.96,
            times: [300.0, 380.0, 470.0, 580.0],
            cpu_cons: 2048.0,
            gpu_cons: 6144.0,
            cpu_inst: [600.0, 800.0, 1050.0, 1350.0],
            gpu_inst: [2500.0, 3200.0, 4000.0, 5000.0],
        }),
        tool("caption_small", "image", "text", "caption", Profile {
            quality: 0.78,
            times: [40.0, 50.0, 60.0, 72.0],
            cpu_cons: 256.0,
            gpu_cons: 0.0,
            cpu_inst: [80.0, 100.0, 120.0, 150.0],
            gpu_inst: [0.0; 4],
        }),
        tool("classify", "image", "text", "classify", Profile {
            quality: 0.90,
            times: [35.0, 42.0, 50.0, 60.0],
            cpu_cons: 512.0,
            gpu_cons: 0.0,
            cpu_inst: [90.0, 110.0, 135.0, 165.0],
            gpu_inst: [0.0; 4],
        }),
        tool("deblur_fast", "image", "image", "deblur", Profile {
            quality: 0.74,
            times: [50.0, 60.0, 75.0, 90.0],
            cpu_cons: 512.0,
            gpu_cons: 0.0,
            cpu_inst: [100.0, 130.0, 160.0, 200.0],
            gpu_inst: [0.0; 4],
        }),
        tool("deblur_hq", "image", "image", "deblur", Profile {
            quality: 0.97,
            times: [350.0, 460.0, 600.0, 780.0],
            cpu_cons: 2048.0,
            gpu_cons: 4096.0,
            cpu_inst: [700.0, 950.0, 1250.0, 1600.0],
            gpu_inst: [2000.0, 2700.0, 3500.0, 4500.0],
        }),
    ];
    ToolUniverse::new(4, 5, kinds(), PriceTable::default(), tools).expect("preset is valid")
}

/// Looks up a built-in universe by name.
pub fn by_name(name: &str) -> Option<ToolUniverse> {
    match name {
        "opencatp10" => Some(opencatp10()),
        "desk5" => Some(desk5()),
        _ => None,
    }
}

pub const NAMES: [&str; 2] = ["opencatp10", "desk5"];
