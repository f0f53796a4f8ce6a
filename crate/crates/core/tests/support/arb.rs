// Copyright 2026 The oxjob Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Generators for merge values. Each strategy first draws a shape, then
//! several values of that shape, so that merges are always well-typed.
//!
//! Histogram weights are whole numbers, as they are for every analysis
//! that fills with unit weight. Float addition of whole numbers below
//! 2^53 is exact, which is what makes the algebraic laws hold bit for bit.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use oxjob_core::merge::{Histogram, MergeValue};
use proptest::collection::{btree_map, btree_set, vec};
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub enum Shape {
    Counter,
    Histogram { lo: f64, hi: f64, nbins: u32 },
    Set,
    Map(Box<Shape>),
    RowList(Vec<String>),
    Compound(BTreeMap<String, Shape>),
}

fn key() -> impl Strategy<Value = String> {
    "[a-e]{1,2}"
}

pub fn shape() -> impl Strategy<Value = Shape> {
    let leaf = prop_oneof![
        Just(Shape::Counter),
        (-100i32..100, 1i32..50, 1u32..12).prop_map(|(lo, width, nbins)| Shape::Histogram {
            lo: lo as f64 / 4.0,
            hi: (lo + width) as f64 / 4.0,
            nbins,
        }),
        Just(Shape::Set),
        vec("[xyz][0-9]?", 1..4).prop_map(Shape::RowList),
    ];
    leaf.prop_recursive(3, 16, 4, |inner| {
        prop_oneof![
            inner.clone().prop_map(|s| Shape::Map(Box::new(s))),
            btree_map(key(), inner, 1..4).prop_map(Shape::Compound),
        ]
    })
}

fn weight() -> impl Strategy<Value = f64> {
    (0u32..1_000_000).prop_map(f64::from)
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1000i32..1000).prop_map(f64::from),
        (-1.0e6f64..1.0e6),
        Just(0.0),
        Just(-0.0),
    ]
}

pub fn value(shape: &Shape) -> BoxedStrategy<MergeValue> {
    match shape.clone() {
        Shape::Counter => (0u64..(1 << 60)).prop_map(MergeValue::counter).boxed(),
        Shape::Histogram { lo, hi, nbins } => (vec(weight(), nbins as usize), weight(), weight())
            .prop_map(move |(bins, underflow, overflow)| {
                MergeValue::Histogram(Histogram {
                    lo,
                    hi,
                    nbins,
                    bins,
                    underflow,
                    overflow,
                })
            })
            .boxed(),
        Shape::Set => btree_set("[a-h]{1,3}", 0..6)
            .prop_map(|elements: BTreeSet<String>| MergeValue::Set { elements })
            .boxed(),
        Shape::Map(inner) => btree_map(key(), value(&inner), 0..4)
            .prop_map(|entries| MergeValue::Map { entries })
            .boxed(),
        Shape::RowList(columns) => {
            let width = columns.len();
            vec(vec(finite(), width), 0..5)
                .prop_map(move |rows| MergeValue::rowlist(columns.clone(), rows).unwrap())
                .boxed()
        }
        Shape::Compound(members) => {
            let parts: Vec<(String, BoxedStrategy<MergeValue>)> =
                members.iter().map(|(k, s)| (k.clone(), value(s))).collect();
            let keys: Vec<String> = parts.iter().map(|(k, _)| k.clone()).collect();
            let strategies: Vec<BoxedStrategy<MergeValue>> =
                parts.into_iter().map(|(_, s)| s).collect();
            strategies
                .prop_map(move |values| MergeValue::Compound {
                    members: keys.iter().cloned().zip(values).collect(),
                })
                .boxed()
        }
    }
}

/// One value.
pub fn any_value() -> impl Strategy<Value = MergeValue> {
    shape().prop_flat_map(|s| value(&s))
}

/// Two values of one shape.
pub fn pair() -> impl Strategy<Value = (MergeValue, MergeValue)> {
    shape().prop_flat_map(|s| (value(&s), value(&s)))
}

/// Three values of one shape.
pub fn triple() -> impl Strategy<Value = (MergeValue, MergeValue, MergeValue)> {
    shape().prop_flat_map(|s| (value(&s), value(&s), value(&s)))
}
