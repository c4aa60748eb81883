#pragma once

#include "config.hpp"
#include "mlp.hpp"
#include "pointcloud.hpp"

namespace trend {

// Temporal neural field: signed distance at (point, timestamp) conditioned
// on the timestamp's feature grid.

// Trilinear feature lookup for world-space points; [B, feat_dim].
diff::Value query_feature(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                          const std::vector<Vec3>& points);

// Signed distance for a batch of world-space points at time t; [B].
// Input layout is [p_normalized, sincos(t), grid feature]; the time block
// is omitted when cfg.temporal_field is off.
diff::Value sdf_batch(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                      const std::vector<Vec3>& points, double t);

// Tape-level variant used for gradient checking: the caller supplies the
// interpolation coordinates, normalized positions and time encoding as
// tape values so derivatives can flow into them.
diff::Value sdf_batch_nodes(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                            diff::Value grid_coords, diff::Value p_norm, diff::Value t_enc);

}  // namespace trend
