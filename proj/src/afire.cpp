// SPDX-License-Identifier: Apache-2.0
#include "mind/afire.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mind/tensor_ops.hpp"

namespace mind {

Tensor add_tensor(ParamStore& store, const std::string& name, size_t rows, size_t cols) {
  store.add(name, rows, cols);
  return {&store.param(name), &store.grad(name)};
}

Tensor bind_tensor(ParamStore& store, const std::string& name) {
  return {&store.param(name), &store.grad(name)};
}

Matrix sinusoidal_position_table(size_t w_max, size_t d) {
  Matrix table(w_max, d);
  for (size_t t = 0; t < w_max; ++t) {
    for (size_t j = 0; j < d; ++j) {
      size_t pair = j / 2;
      double denom = std::pow(10000.0, (2.0 * static_cast<double>(pair)) / static_cast<double>(d));
      double angle = static_cast<double>(t) / denom;
      table.at(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

AfireParams AfireParams::create(ParamStore& store, size_t d_in, size_t d, size_t d_hidden,
                                size_t w_max, Rng& rng) {
  AfireParams p;
  p.proj_w = add_tensor(store, "afire.proj_w", d, d_in);
  p.proj_b = add_tensor(store, "afire.proj_b", 1, d);
  p.mlp_w1 = add_tensor(store, "afire.mlp_w1", d_hidden, d);
  p.mlp_b1 = add_tensor(store, "afire.mlp_b1", 1, d_hidden);
  p.mlp_w2 = add_tensor(store, "afire.mlp_w2", d, d_hidden);
  p.mlp_b2 = add_tensor(store, "afire.mlp_b2", 1, d);
  p.ln_gain = add_tensor(store, "afire.ln_gain", 1, d);
  p.ln_bias = add_tensor(store, "afire.ln_bias", 1, d);

  double proj_std = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (double& v : p.proj_w.value->data()) v = rng.normal(0.0, proj_std);
  double w1_std = std::sqrt(2.0 / static_cast<double>(d));
  for (double& v : p.mlp_w1.value->data()) v = rng.normal(0.0, w1_std);
  // mlp_w2 stays zero: the temporal block starts as a pure residual.
  p.ln_gain.value->fill(1.0);
  p.pos = sinusoidal_position_table(w_max, d);
  return p;
}

AfireParams AfireParams::create_identity(ParamStore& store, size_t d, size_t w_max) {
  Rng unused(0);
  AfireParams p = create(store, d, d, d, w_max, unused);
  *p.proj_w.value = Matrix::identity(d);
  p.mlp_w1.value->fill(0.0);
  return p;
}

AfireParams AfireParams::bind(ParamStore& store, size_t w_max) {
  AfireParams p;
  p.proj_w = bind_tensor(store, "afire.proj_w");
  p.proj_b = bind_tensor(store, "afire.proj_b");
  p.mlp_w1 = bind_tensor(store, "afire.mlp_w1");
  p.mlp_b1 = bind_tensor(store, "afire.mlp_b1");
  p.mlp_w2 = bind_tensor(store, "afire.mlp_w2");
  p.mlp_b2 = bind_tensor(store, "afire.mlp_b2");
  p.ln_gain = bind_tensor(store, "afire.ln_gain");
  p.ln_bias = bind_tensor(store, "afire.ln_bias");
  p.pos = sinusoidal_position_table(w_max, p.proj_w.value->rows());
  return p;
}

Matrix bin_to_tr(const FeatureSequence& features, double tr_seconds, size_t n_tr) {
  if (tr_seconds <= 0.0 || features.rate_hz <= 0.0) {
    raise(ErrorCode::InvalidSpec, "tr_seconds and rate_hz must be positive");
  }
  const Matrix& frames = features.frames;
  if (frames.rows() == 0 || frames.cols() == 0) {
    raise(ErrorCode::EmptySequence, "no frames in " + features.episode_id);
  }
  require_finite(frames, "feature frames");

  double last_timestamp = static_cast<double>(frames.rows() - 1) / features.rate_hz;
  Matrix out(n_tr, frames.cols());
  std::vector<size_t> counts(n_tr, 0);
  for (size_t k = 0; k < frames.rows(); ++k) {
    double t = static_cast<double>(k) / features.rate_hz;
    double ratio = t / tr_seconds;
    auto bin = static_cast<size_t>(std::floor(ratio));
    // Frames landing a hair under a bin edge belong to the next bin.
    if (static_cast<double>(bin + 1) - ratio < 1e-9) bin += 1;
    if (bin >= n_tr) continue;
    auto row = out.row(bin);
    auto src = frames.row(k);
    for (size_t c = 0; c < frames.cols(); ++c) row[c] += src[c];
    counts[bin] += 1;
  }
  for (size_t b = 0; b < n_tr; ++b) {
    if (counts[b] == 0) {
      if (static_cast<double>(b) * tr_seconds > last_timestamp) {
        raise(ErrorCode::InsufficientFrames,
              "episode " + features.episode_id + " spans fewer than " + std::to_string(n_tr) +
                  " TR bins");
      }
      raise(ErrorCode::EmptyBin, "TR bin " + std::to_string(b) + " of " + features.episode_id);
    }
    auto row = out.row(b);
    for (size_t c = 0; c < out.cols(); ++c) row[c] /= static_cast<double>(counts[b]);
  }
  return out;
}

Matrix encode_features(const Matrix& x, const AfireParams& params, size_t start_tr,
                       EncodeCache* cache) {
  const size_t t_rows = x.rows();
  const size_t d = params.d();
  const size_t dh = params.d_hidden();
  if (x.cols() != params.d_in()) {
    raise(ErrorCode::InvalidShape, "encode input has " + std::to_string(x.cols()) +
                                       " columns, projector expects " +
                                       std::to_string(params.d_in()));
  }
  if (start_tr + t_rows > params.w_max()) {
    raise(ErrorCode::WindowTooLong, std::to_string(start_tr + t_rows) +
                                        " TRs exceed positional table of " +
                                        std::to_string(params.w_max()));
  }

  Matrix tokens(t_rows, d);
  if (cache) {
    cache->start_tr = start_tr;
    cache->x = x;
    cache->a = Matrix(t_rows, d);
    cache->q1 = Matrix(t_rows, dh);
    cache->r1 = Matrix(t_rows, dh);
    cache->normed = Matrix(t_rows, d);
    cache->inv_std.assign(t_rows, 0.0);
  }

  std::vector<double> a(d), v(d);
  for (size_t t = 0; t < t_rows; ++t) {
    std::vector<double> h = affine(x.row(t), *params.proj_w.value, params.proj_b.value->row(0));
    auto pos = params.pos.row(start_tr + t);
    for (size_t j = 0; j < d; ++j) a[j] = h[j] + pos[j];

    std::vector<double> q1 = affine(a, *params.mlp_w1.value, params.mlp_b1.value->row(0));
    std::vector<double> r1 = gelu(q1);
    std::vector<double> m = affine(r1, *params.mlp_w2.value, params.mlp_b2.value->row(0));
    for (size_t j = 0; j < d; ++j) v[j] = a[j] + m[j];

    double mean = 0.0;
    for (double val : v) mean += val;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double val : v) var += (val - mean) * (val - mean);
    var /= static_cast<double>(d);
    double inv_std = 1.0 / std::sqrt(var + params.ln_eps);

    auto out_row = tokens.row(t);
    auto gain = params.ln_gain.value->row(0);
    auto bias = params.ln_bias.value->row(0);
    for (size_t j = 0; j < d; ++j) {
      double n = (v[j] - mean) * inv_std;
      out_row[j] = gain[j] * n + bias[j];
      if (cache) cache->normed.at(t, j) = n;
    }
    if (cache) {
      for (size_t j = 0; j < d; ++j) cache->a.at(t, j) = a[j];
      for (size_t j = 0; j < dh; ++j) {
        cache->q1.at(t, j) = q1[j];
        cache->r1.at(t, j) = r1[j];
      }
      cache->inv_std[t] = inv_std;
    }
  }
  return tokens;
}

Matrix encode_backward(const Matrix& d_tokens, const EncodeCache& cache,
                       const AfireParams& params) {
  const size_t t_rows = d_tokens.rows();
  const size_t d = params.d();
  const size_t dh = params.d_hidden();
  if (cache.a.rows() != t_rows || cache.x.rows() != t_rows) {
    raise(ErrorCode::StaleCache, "encode cache does not match gradient rows");
  }

  Matrix dx(t_rows, params.d_in());
  std::vector<double> dn(d), dv(d), da(d), dq1(dh);
  for (size_t t = 0; t < t_rows; ++t) {
    auto dz = d_tokens.row(t);
    auto gain = params.ln_gain.value->row(0);
    auto g_gain = params.ln_gain.grad->row(0);
    auto g_bias = params.ln_bias.grad->row(0);
    for (size_t j = 0; j < d; ++j) {
      g_gain[j] += dz[j] * cache.normed.at(t, j);
      g_bias[j] += dz[j];
      dn[j] = gain[j] * dz[j];
    }

    // Layer norm backward with population variance:
    // dv = inv_std * (dn - mean(dn) - n * mean(dn * n))
    double mean_dn = 0.0, mean_dn_n = 0.0;
    for (size_t j = 0; j < d; ++j) {
      mean_dn += dn[j];
      mean_dn_n += dn[j] * cache.normed.at(t, j);
    }
    mean_dn /= static_cast<double>(d);
    mean_dn_n /= static_cast<double>(d);
    for (size_t j = 0; j < d; ++j) {
      dv[j] = cache.inv_std[t] * (dn[j] - mean_dn - cache.normed.at(t, j) * mean_dn_n);
    }

    // v = a + mlp(a): residual plus the temporal block.
    std::vector<double> dr1 =
        affine_backward(cache.r1.row(t), *params.mlp_w2.value, dv, *params.mlp_w2.grad,
                        params.mlp_b2.grad->row(0));
    for (size_t j = 0; j < dh; ++j) dq1[j] = dr1[j] * gelu_grad(cache.q1.at(t, j));
    std::vector<double> da_mlp =
        affine_backward(cache.a.row(t), *params.mlp_w1.value, dq1, *params.mlp_w1.grad,
                        params.mlp_b1.grad->row(0));
    for (size_t j = 0; j < d; ++j) da[j] = dv[j] + da_mlp[j];

    std::vector<double> dx_row =
        affine_backward(cache.x.row(t), *params.proj_w.value, da, *params.proj_w.grad,
                        params.proj_b.grad->row(0));
    auto out = dx.row(t);
    for (size_t c = 0; c < dx.cols(); ++c) out[c] = dx_row[c];
  }
  return dx;
}

TokenSequence project_and_encode(const FeatureSequence& binned_features, double tr_seconds,
                                 const AfireParams& params) {
  TokenSequence seq;
  seq.episode_id = binned_features.episode_id;
  seq.subject_id = binned_features.subject_id;
  seq.tr_seconds = tr_seconds;
  seq.tokens = encode_features(binned_features.frames, params);
  return seq;
}

std::vector<size_t> window_starts(size_t t, size_t win, size_t stride) {
  if (t == 0) raise(ErrorCode::EmptySequence, "cannot window an empty sequence");
  if (win == 0 || stride == 0) raise(ErrorCode::InvalidSpec, "win and stride must be >= 1");
  std::vector<size_t> starts;
  if (t < win) {
    starts.push_back(0);
    return starts;
  }
  for (size_t s = 0; s + win <= t; s += stride) starts.push_back(s);
  size_t tail = t - win;
  if (starts.empty() || starts.back() != tail) starts.push_back(tail);
  return starts;
}

std::vector<Sample> make_windows(const TokenSequence& tokens, const ResponseSequence& responses,
                                 size_t win, size_t stride) {
  if (tokens.tokens.rows() != responses.responses.rows()) {
    raise(ErrorCode::InvalidShape, "token and response lengths differ for " + tokens.episode_id);
  }
  const size_t t = tokens.tokens.rows();
  std::vector<size_t> starts = window_starts(t, win, stride);
  size_t effective_win = std::min(win, t);

  std::vector<Sample> samples;
  samples.reserve(starts.size());
  for (size_t start : starts) {
    Sample s;
    s.subject_id = tokens.subject_id;
    s.episode_id = tokens.episode_id;
    s.start_tr = start;
    s.tokens = Matrix(effective_win, tokens.tokens.cols());
    s.responses = Matrix(effective_win, responses.responses.cols());
    for (size_t r = 0; r < effective_win; ++r) {
      auto tok_src = tokens.tokens.row(start + r);
      auto tok_dst = s.tokens.row(r);
      std::copy(tok_src.begin(), tok_src.end(), tok_dst.begin());
      auto resp_src = responses.responses.row(start + r);
      auto resp_dst = s.responses.row(r);
      std::copy(resp_src.begin(), resp_src.end(), resp_dst.begin());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(
    const std::vector<Sample>& samples, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) raise(ErrorCode::InvalidSpec, "split ratio must be in (0,1)");

  std::map<std::pair<uint32_t, std::string>, std::vector<size_t>> groups;
  for (size_t i = 0; i < samples.size(); ++i) {
    groups[{samples[i].subject_id, samples[i].episode_id}].push_back(i);
  }

  std::vector<Sample> train, val;
  for (auto& [key, indices] : groups) {
    // Per-group stream: the split of one (subject, episode) group does not
    // depend on which other groups are present.
    Rng group_rng = rng.derive(fnv1a64(key.second) ^ (0x9E3779B9ULL * (key.first + 1)));
    group_rng.shuffle(indices);
    size_t n = indices.size();
    // +1e-9 guards against the product dipping just under an integer.
    auto n_train = static_cast<size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
    n_train = std::max<size_t>(n_train, 1);
    if (n >= 2 && n_train == n) n_train = n - 1;
    for (size_t j = 0; j < n; ++j) {
      (j < n_train ? train : val).push_back(samples[indices[j]]);
    }
  }
  return {std::move(train), std::move(val)};
}

}  // namespace mind
