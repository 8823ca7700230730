mod common;

use common::canny_ref::{iou, reference_canny, shapes};
use xview::synthproxy::{canny, CannyParams};

#[test]
fn agrees_with_imageproc() {
    let p = CannyParams::default();
    for (name, img) in shapes() {
        let ours = canny(&img, &p).unwrap();
        let theirs = reference_canny(&img, p.low, p.high);
        let score = iou(&ours, &theirs);
        println!("{name}: ours {} ref {} iou {score:.3}", ours.count(), theirs.count());
        assert!(score >= 0.9, "{name}: iou {score}");
    }
}
