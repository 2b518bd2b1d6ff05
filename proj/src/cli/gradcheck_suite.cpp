// SPDX-License-Identifier: Apache-2.0
#include "xkd/cli/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xkd/autograd/gradcheck.hpp"
#include "xkd/autograd/op_kind.hpp"
#include "xkd/autograd/ops.hpp"
#include "xkd/backbone/networks.hpp"
#include "xkd/core/error.hpp"
#include "xkd/core/rng.hpp"
#include "xkd/objectives/losses.hpp"

namespace xkd {

namespace {

using Inputs = std::vector<Tensor>;

Tensor normal_tensor(Rng& rng, Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal();
    return Tensor(std::move(shape), std::move(v));
}

Tensor uniform_tensor(Rng& rng, Shape shape, double lo, double hi) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
}

Tensor simplex_rows(Rng& rng, std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += v[r * cols + c] = -std::log(1.0 - rng.uniform());
        for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] /= z;
    }
    return Tensor({rows, cols}, std::move(v));
}

/// Scalar readout in which every output entry carries a distinct weight.
Tensor weighted_sum(const Tensor& y, const Tensor& weights) {
    require(y.numel() <= weights.numel(), "gradcheck: readout weights too short");
    return ops::sum(ops::mul(ops::reshape(y, {y.numel()}), ops::slice(weights, 0, 0, y.numel())));
}

Rng item_rng(const std::string& name, std::uint64_t seed) { return Rng::stream(seed, "gradcheck." + name); }

double check_op(OpKind kind, std::uint64_t seed) {
    Rng rng = item_rng(to_string(kind), seed);
    Inputs inputs;
    OpAttrs attrs;
    switch (kind) {
        case OpKind::Add:
        case OpKind::Sub:
        case OpKind::Mul: inputs = {normal_tensor(rng, {3, 4}), normal_tensor(rng, {4})}; break;
        case OpKind::Div: inputs = {normal_tensor(rng, {3, 4}), uniform_tensor(rng, {3, 1}, 0.5, 2.0)}; break;
        case OpKind::ScalarMul:
            attrs.scalar = rng.uniform(-2, 2);
            inputs = {normal_tensor(rng, {2, 3, 2})};
            break;
        case OpKind::Matmul: inputs = {normal_tensor(rng, {3, 4}), normal_tensor(rng, {4, 2})}; break;
        case OpKind::Transpose: inputs = {normal_tensor(rng, {3, 4})}; break;
        case OpKind::Reshape:
            attrs.shape = {6, 2};
            inputs = {normal_tensor(rng, {3, 4})};
            break;
        case OpKind::Slice:
            attrs.axis = 1;
            attrs.begin = 1;
            attrs.end = 3;
            inputs = {normal_tensor(rng, {2, 4, 3})};
            break;
        case OpKind::Concat:
            attrs.axis = 0;
            inputs = {normal_tensor(rng, {2, 3}), normal_tensor(rng, {1, 3})};
            break;
        case OpKind::Gather:
            attrs.indices = {2, 0, 2};
            inputs = {normal_tensor(rng, {4, 3})};
            break;
        case OpKind::Mean:
        case OpKind::Sum:
            if (seed % 2 == 0) attrs.axis = 1;
            inputs = {normal_tensor(rng, {2, 3, 4})};
            break;
        case OpKind::Sqrt:
        case OpKind::Log: inputs = {uniform_tensor(rng, {3, 4}, 0.5, 3.0)}; break;
        default: inputs = {normal_tensor(rng, {4, 4})}; break;
    }
    const Tensor weights = normal_tensor(rng, {64});
    return grad_check([&](const Inputs& in) { return weighted_sum(op_forward(kind, in, attrs), weights); }, inputs);
}

void add_losses(GradcheckRegistry& r) {
    r.add({"loss.recon", [](std::uint64_t seed) {
               Rng rng = item_rng("recon", seed);
               const Tensor target = normal_tensor(rng, {3, 4});
               return grad_check([&](const Inputs& in) { return recon_loss(in[0], target).value; },
                                 {normal_tensor(rng, {3, 4})});
           }});
    r.add({"loss.joint_recon", [](std::uint64_t seed) {
               Rng rng = item_rng("joint_recon", seed);
               const Tensor tv = normal_tensor(rng, {2, 3}), ta = normal_tensor(rng, {1, 2});
               return grad_check([&](const Inputs& in) { return joint_recon_loss(in[0], tv, in[1], ta); },
                                 {normal_tensor(rng, {2, 3}), normal_tensor(rng, {1, 2})});
           }});
    for (auto variant : {CrossAttentionVariant::Scale, CrossAttentionVariant::Softmax}) {
        const std::string name = "cross_attention." + to_string(variant);
        r.add({"loss." + name, [variant, name](std::uint64_t seed) {
                   Rng rng = item_rng(name, seed);
                   const Tensor w = normal_tensor(rng, {32});
                   return grad_check(
                       [&](const Inputs& in) {
                           const auto cw = cross_modal_attention(in[0], in[1], variant);
                           return ops::add(weighted_sum(cw.video, w), weighted_sum(cw.audio, ops::scale(w, 0.5)));
                       },
                       {uniform_tensor(rng, {2, 4}, 0.05, 0.3), uniform_tensor(rng, {2, 3}, 0.05, 0.3)});
               }});
    }
    r.add({"loss.refine", [](std::uint64_t seed) {
               Rng rng = item_rng("refine", seed);
               const Tensor w = normal_tensor(rng, {12});
               return grad_check([&](const Inputs& in) { return weighted_sum(refine(in[0], in[1]).features, w); },
                                 {normal_tensor(rng, {4, 3}), uniform_tensor(rng, {2, 4}, 0.1, 1.0)});
           }});
    r.add({"loss.mmd", [](std::uint64_t seed) {
               Rng rng = item_rng("mmd", seed);
               const double sigma = rng.uniform(0.8, 2.0);
               return grad_check([&](const Inputs& in) { return mmd(in[0], in[1], {sigma}); },
                                 {normal_tensor(rng, {4, 3}), normal_tensor(rng, {3, 3})});
           }});
    for (auto variant : {AlignmentVariant::Da, AlignmentVariant::Da1, AlignmentVariant::Da2}) {
        const std::string name = to_string(variant);
        r.add({"loss." + name, [variant, name](std::uint64_t seed) {
                   Rng rng = item_rng(name, seed);
                   const double sigma = rng.uniform(0.8, 2.0);
                   // Teacher sets are constants by contract.
                   const Tensor tv = normal_tensor(rng, {2, 3}), ta = normal_tensor(rng, {2, 3});
                   return grad_check(
                       [&](const Inputs& in) { return domain_alignment_loss(in[0], in[1], tv, ta, variant, {sigma}); },
                       {normal_tensor(rng, {3, 3}), normal_tensor(rng, {3, 3})});
               }});
    }
    r.add({"loss.sharpen", [](std::uint64_t seed) {
               Rng rng = item_rng("sharpen", seed);
               const double tau = rng.uniform(0.3, 1.0);
               const Tensor w = normal_tensor(rng, {8});
               return grad_check([&](const Inputs& in) { return weighted_sum(sharpen(in[0], tau), w); },
                                 {normal_tensor(rng, {2, 4})});
           }});
    r.add({"loss.kd", [](std::uint64_t seed) {
               Rng rng = item_rng("kd", seed);
               const Tensor tv = simplex_rows(rng, 2, 5), ta = simplex_rows(rng, 2, 5);
               return grad_check(
                   [&](const Inputs& in) {
                       return kd_loss(tv, ta, {sharpen(in[0], 0.5), sharpen(in[1], 0.5)}, {sharpen(in[2], 0.5)});
                   },
                   {normal_tensor(rng, {2, 5}), normal_tensor(rng, {2, 5}), normal_tensor(rng, {2, 5})});
           }});
    r.add({"loss.total", [](std::uint64_t seed) {
               Rng rng = item_rng("total", seed);
               const LossWeights w{rng.uniform(0, 5), rng.uniform(0, 2), rng.uniform(0, 2)};
               return grad_check([&](const Inputs& in) { return total_loss(in[0], in[1], in[2], w); },
                                 {normal_tensor(rng, {1}), normal_tensor(rng, {1}), normal_tensor(rng, {1})});
           }});
}

void add_networks(GradcheckRegistry& r) {
    // Parameters enter as inputs so their gradients are checked too.
    r.add({"net.encoder", [](std::uint64_t seed) {
               Rng rng = item_rng("encoder", seed);
               const Backbone base = Backbone::init({8, 2, 2, 2}, rng);
               const Tensor w = normal_tensor(rng, {64});
               return grad_check(
                   [&](const Inputs& in) {
                       Backbone b = base;
                       b.blocks[0].attn.qkv.weight = in[1];
                       b.blocks[1].fc1.weight = in[2];
                       const auto out = encode(b, in[0]);
                       return ops::add(weighted_sum(out.tokens, w), weighted_sum(out.attn, ops::scale(w, 3.0)));
                   },
                   {normal_tensor(rng, {4, 8}), base.blocks[0].attn.qkv.weight.detach(),
                    base.blocks[1].fc1.weight.detach()});
           }});
    r.add({"net.decoder", [](std::uint64_t seed) {
               Rng rng = item_rng("decoder", seed);
               TokenBatch batch;
               batch.modality = Modality::Audio;
               batch.grid = {2, 2};
               batch.tokens = normal_tensor(rng, {4, 3});
               batch.mask = {false, true, false, true};
               batch.kept_indices = {0, 2};
               const Backbone enc = Backbone::init({8, 1, 2, 2}, rng);
               const Decoder base = Decoder::init({6, 1, 2, 2}, 8, 3, PositionalLayout({batch.grid}), rng);
               const Tensor w = normal_tensor(rng, {6});
               return grad_check(
                   [&](const Inputs& in) {
                       Decoder d = base;
                       d.in_proj.weight = in[1];
                       d.mask_token = in[2];
                       d.out_proj.weight = in[3];
                       return weighted_sum(decode(d, encode(enc, in[0]), batch), w);
                   },
                   {normal_tensor(rng, {3, 8}), base.in_proj.weight.detach(), base.mask_token.detach(),
                    base.out_proj.weight.detach()});
           }});
    r.add({"net.projector", [](std::uint64_t seed) {
               Rng rng = item_rng("projector", seed);
               const ProjectorHead base = ProjectorHead::init({6, 4, 5}, 4, rng);
               const Tensor w = normal_tensor(rng, {10});
               return grad_check(
                   [&](const Inputs& in) {
                       ProjectorHead h = base;
                       h.fc1.weight = in[1];
                       h.last.weight = in[2];
                       return weighted_sum(project(h, in[0]), w);
                   },
                   {normal_tensor(rng, {2, 4}), base.fc1.weight.detach(), base.last.weight.detach()});
           }});
}

}  // namespace

void GradcheckRegistry::add(GradcheckItem item) {
    const bool taken =
        std::any_of(items_.begin(), items_.end(), [&](const GradcheckItem& i) { return i.name == item.name; });
    require(!taken, "gradcheck: duplicate item " + item.name);
    items_.push_back(std::move(item));
}

GradcheckRegistry GradcheckRegistry::standard() {
    GradcheckRegistry r;
    for (auto kind : all_op_kinds())
        r.add({"op." + to_string(kind), [kind](std::uint64_t seed) { return check_op(kind, seed); }});
    add_losses(r);
    add_networks(r);
    return r;
}

bool gradcheck_matches(const std::string& name, const std::string& filter) {
    if (filter.empty()) return false;
    if (name == filter) return true;
    if (name.size() > filter.size() && name.compare(0, filter.size(), filter) == 0 && name[filter.size()] == '.')
        return true;
    return name.size() > filter.size() && name.compare(name.size() - filter.size(), filter.size(), filter) == 0 &&
           name[name.size() - filter.size() - 1] == '.';
}

std::vector<GradcheckOutcome> run_gradcheck(const GradcheckRegistry& registry, std::uint64_t seeds,
                                            const std::vector<std::string>& only) {
    std::vector<GradcheckOutcome> out;
    for (const auto& item : registry.items()) {
        if (!only.empty() &&
            std::none_of(only.begin(), only.end(), [&](const std::string& f) { return gradcheck_matches(item.name, f); }))
            continue;
        GradcheckOutcome o{item.name, 0.0, 0};
        for (std::uint64_t s = 0; s < seeds; ++s) {
            double e;
            try {
                e = item.run(s);
            } catch (const std::exception&) {
                e = std::numeric_limits<double>::infinity();
            }
            if (std::isnan(e)) e = std::numeric_limits<double>::infinity();
            if (e > o.max_error) {
                o.max_error = e;
                o.worst_seed = s;
            }
        }
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace xkd
