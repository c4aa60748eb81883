#include "pointcloud.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "common.hpp"

namespace trend {

PointCloud transform_to_frame(const PointCloud& cloud, const Pose& target) {
  PointCloud out = cloud;
  for (size_t i = 0; i < cloud.points.size(); ++i)
    out.points[i] = target.to_local(cloud.frame_pose.to_world(cloud.points[i]));
  out.sensor_origin = target.to_local(cloud.frame_pose.to_world(cloud.sensor_origin));
  out.frame_pose = target;
  return out;
}

PointCloud ground_filter(const PointCloud& cloud, double z_thd) {
  if (!std::isfinite(z_thd)) fail_config("ground_filter: z_thd must be finite");
  PointCloud out;
  out.feat_dim = cloud.feat_dim;
  out.timestamp = cloud.timestamp;
  out.capture_pose = cloud.capture_pose;
  out.frame_pose = cloud.frame_pose;
  out.sensor_origin = cloud.sensor_origin;
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    if (cloud.points[i].z > z_thd) {
      out.points.push_back(cloud.points[i]);
      for (int c = 0; c < cloud.feat_dim; ++c)
        out.features.push_back(cloud.features[i * size_t(cloud.feat_dim) + c]);
    }
  }
  return out;
}

namespace {
constexpr char kMagic[4] = {'T', 'R', 'N', 'D'};
constexpr uint16_t kVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <typename T>
T take(std::ifstream& f, const std::string& path) {
  T v;
  if (!f.read(reinterpret_cast<char*>(&v), sizeof(T)))
    fail_io("truncated point-cloud file: " + path);
  return v;
}
}  // namespace

void save_pointcloud(const PointCloud& cloud, const std::string& path) {
  std::string buf;
  buf.append(kMagic, 4);
  put<uint16_t>(buf, kVersion);
  put<uint32_t>(buf, uint32_t(cloud.points.size()));
  put<uint16_t>(buf, uint16_t(cloud.feat_dim));
  put<uint32_t>(buf, 0);  // reserved; pads the header to 16 bytes
  put<double>(buf, cloud.timestamp);
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    put<float>(buf, float(cloud.points[i].x));
    put<float>(buf, float(cloud.points[i].y));
    put<float>(buf, float(cloud.points[i].z));
    for (int c = 0; c < cloud.feat_dim; ++c)
      put<float>(buf, float(cloud.features[i * size_t(cloud.feat_dim) + c]));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail_io("cannot open for write: " + path);
  f.write(buf.data(), std::streamsize(buf.size()));
  if (!f) fail_io("write failed: " + path);
}

PointCloud load_pointcloud(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_io("cannot open point-cloud file: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    fail_io("bad point-cloud magic in " + path);
  uint16_t version = take<uint16_t>(f, path);
  if (version != kVersion) fail_io("unsupported point-cloud version in " + path);
  uint32_t n = take<uint32_t>(f, path);
  uint16_t d = take<uint16_t>(f, path);
  take<uint32_t>(f, path);  // reserved
  PointCloud cloud;
  cloud.feat_dim = int(d);
  cloud.timestamp = take<double>(f, path);
  cloud.points.resize(n);
  cloud.features.resize(size_t(n) * d);
  for (uint32_t i = 0; i < n; ++i) {
    cloud.points[i].x = double(take<float>(f, path));
    cloud.points[i].y = double(take<float>(f, path));
    cloud.points[i].z = double(take<float>(f, path));
    for (uint16_t c = 0; c < d; ++c)
      cloud.features[size_t(i) * d + c] = double(take<float>(f, path));
  }
  return cloud;
}

}  // namespace trend
