mod common;

use s2s_core::model::Combiner;
use s2s_core::nn::BackboneKind;

use common::gradcheck::{cnet_check, full_batch_check, query_check, vnet_check};

#[test]
fn tiny_vnet_gradients() {
    vnet_check(BackboneKind::Tiny, 5, 16, 8, 12);
    vnet_check(BackboneKind::Tiny, 3, 32, 16, 6);
}

#[test]
fn residual_basic_vnet_gradients() {
    vnet_check(BackboneKind::Paper18, 3, 32, 512, 2);
}

#[test]
fn residual_bottleneck_vnet_gradients() {
    vnet_check(BackboneKind::Paper50, 4, 32, 2048, 1);
}

#[test]
fn qnet_gradients_every_layout() {
    for c in Combiner::ALL {
        query_check(c, false);
    }
    query_check(Combiner::Sum, true);
}

#[test]
fn cnet_gradients() {
    cnet_check();
}

#[test]
fn full_batch_loss_gradients() {
    full_batch_check();
}
