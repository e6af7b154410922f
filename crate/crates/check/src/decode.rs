use exmap_core::data::{class_template, GLYPH_SIDE, IMAGE_SIDE};

const HW: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Reads the tint attribute straight from the pixels: red-dominant images
/// decode to 0, green-dominant to 1 (ties to 0).
pub fn decode_tint(img: &[f64]) -> usize {
    let red: f64 = img[..HW].iter().sum();
    let green: f64 = img[HW..2 * HW].iter().sum();
    usize::from(red < green)
}

/// Reads the glyph attribute from the corner patch: cells where the filled
/// and checkerboard variants differ are bright only for the filled variant.
pub fn decode_glyph(img: &[f64]) -> usize {
    let mut sum = 0.0;
    let mut count = 0.0;
    for r in 0..GLYPH_SIDE {
        for c in 0..GLYPH_SIDE {
            if (r + c) % 2 == 1 {
                for ch in 0..3 {
                    sum += img[ch * HW + r * IMAGE_SIDE + c];
                }
                count += 3.0;
            }
        }
    }
    usize::from(sum / count < 0.5)
}

/// Reads the class from the blue channel by comparing the mean intensity
/// over each class's stroke mask, counting only pixels exclusive to one
/// mask; the stroke is darker than the background, so the dimmer mask wins.
pub fn decode_class(img: &[f64]) -> usize {
    let t0 = class_template(0);
    let t1 = class_template(1);
    let blue = &img[2 * HW..3 * HW];
    let mut mean = [0.0f64; 2];
    let mut count = [0.0f64; 2];
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            let v = blue[r * IMAGE_SIDE + c];
            match (t0[r][c], t1[r][c]) {
                (true, false) => {
                    mean[0] += v;
                    count[0] += 1.0;
                }
                (false, true) => {
                    mean[1] += v;
                    count[1] += 1.0;
                }
                _ => {}
            }
        }
    }
    usize::from(mean[0] / count[0] > mean[1] / count[1])
}

/// Fraction of samples where `decode` recovers `truth`.
pub fn decoder_accuracy(
    images: impl Iterator<Item = Vec<f64>>,
    truth: &[usize],
    decode: fn(&[f64]) -> usize,
) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (img, &t) in images.zip(truth) {
        if decode(&img) == t {
            correct += 1;
        }
        total += 1;
    }
    correct as f64 / total as f64
}
