//! Central finite-difference checks of every backward pass.

mod common;

use common::{gradient_cases, run_case, TOLERANCE};

macro_rules! cases {
    ($($test:ident => $name:literal,)*) => {$(
        #[test]
        fn $test() {
            let e = run_case($name);
            assert!(e < TOLERANCE, "{}: relative error {e:.3e}", $name);
        }
    )*};
}

cases! {
    conv_same_stride_one => "conv 3x3 stride 1",
    conv_even_kernel_asymmetric_padding => "conv 2x2 asymmetric padding",
    conv_single_output_map => "conv single output map",
    conv_strided => "conv stride 2",
    transpose_conv_stride_two => "transpose conv 5x5 stride 2",
    transpose_conv_even_kernel => "transpose conv 2x2 stride 1",
    max_pool => "max pool 2x2",
    max_pool_overlapping => "max pool 3x3 overlapping",
    dense_from_maps => "dense from maps",
    dense_from_vector => "dense from vector",
    dropout => "dropout",
    relu => "relu",
    linear => "linear",
    reshape => "reshape",
    affine => "affine",
    full_gnn_w8 => "gnn width 8",
    full_cnn_w8 => "cnn width 8",
}

#[test]
fn every_case_has_a_test() {
    assert_eq!(gradient_cases().len(), 17);
}
