//! Confusion-matrix rendering: a row-normalized heat grid, dark blue for
//! empty cells through warm yellow for a cell holding its row's whole
//! support.

use poseact_core::types::ACTION_CLASS_COUNT;

const CELL: u32 = 64;
const BORDER: u32 = 2;

fn heat_color(fraction: f64) -> image::Rgb<u8> {
    let f = fraction.clamp(0.0, 1.0);
    let r = (20.0 + 235.0 * f) as u8;
    let g = (24.0 + 180.0 * f) as u8;
    let b = (80.0 + 40.0 * (1.0 - f)) as u8;
    image::Rgb([r, g, b])
}

pub fn confusion_image(
    matrix: &[[u64; ACTION_CLASS_COUNT]; ACTION_CLASS_COUNT],
) -> image::RgbImage {
    let side = ACTION_CLASS_COUNT as u32 * CELL;
    let mut image = image::RgbImage::from_pixel(side, side, image::Rgb([0, 0, 0]));
    for (row, counts) in matrix.iter().enumerate() {
        let support: u64 = counts.iter().sum();
        for (col, &count) in counts.iter().enumerate() {
            let fraction = if support == 0 {
                0.0
            } else {
                count as f64 / support as f64
            };
            let color = heat_color(fraction);
            let (x0, y0) = (col as u32 * CELL, row as u32 * CELL);
            for y in y0 + BORDER..y0 + CELL - BORDER {
                for x in x0 + BORDER..x0 + CELL - BORDER {
                    image.put_pixel(x, y, color);
                }
            }
        }
    }
    image
}
