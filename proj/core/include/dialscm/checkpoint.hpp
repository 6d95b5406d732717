#pragma once

#include <string>
#include <vector>

namespace dialscm {

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;
};

struct Checkpoint {
    std::vector<NamedTensor> tensors;
    std::string meta_json = "{}";
};

// JSON manifest at `path` plus a sidecar binary at `path` + ".bin" holding
// the concatenated buffers as little-endian float64, independent of host
// byte order. Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Version embedded in every manifest; readers reject other versions.
int checkpoint_format_version();

} // namespace dialscm
