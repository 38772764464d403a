// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

pub mod attacks;
pub mod campaign;
pub mod consensus;
pub mod net;
pub mod protocol;
pub mod executor;
pub mod generator;
