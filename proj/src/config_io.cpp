#include "etd/config_io.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "etd/errors.hpp"

namespace etd {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s, long row) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(trim(item)));
        } catch (const std::exception&) {
            throw parse_error("config: expected integer list, got '" + s + "'", row);
        }
    }
    if (out.empty()) throw parse_error("config: empty list", row);
    return out;
}

int parse_int(const std::string& s, long row) {
    try {
        return std::stoi(trim(s));
    } catch (const std::exception&) {
        throw parse_error("config: expected integer, got '" + s + "'", row);
    }
}

double parse_double(const std::string& s, long row) {
    try {
        return std::stod(trim(s));
    } catch (const std::exception&) {
        throw parse_error("config: expected number, got '" + s + "'", row);
    }
}

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

} // namespace

std::string architecture_name(Architecture a) {
    switch (a) {
        case Architecture::kClassicalCnn: return "cnn";
        case Architecture::kDensenet1d: return "densenet1d";
        case Architecture::kMsDensenet: return "ms-densenet";
    }
    throw config_error("unknown architecture");
}

Architecture architecture_from_name(const std::string& s) {
    if (s == "cnn") return Architecture::kClassicalCnn;
    if (s == "densenet1d") return Architecture::kDensenet1d;
    if (s == "ms-densenet") return Architecture::kMsDensenet;
    throw parse_error("config: unknown architecture '" + s +
                      "' (expected cnn, densenet1d or ms-densenet)");
}

std::string ordering_name(Ordering o) {
    return o == Ordering::kConvBnRelu ? "conv-bn-relu" : "bn-relu-conv";
}

Ordering ordering_from_name(const std::string& s) {
    if (s == "conv-bn-relu") return Ordering::kConvBnRelu;
    if (s == "bn-relu-conv") return Ordering::kBnReluConv;
    throw parse_error("config: unknown ordering '" + s + "'");
}

std::string serialize_config(const ModelConfig& cfg) {
    std::ostringstream os;
    os << "name = " << cfg.name << "\n";
    os << "architecture = " << architecture_name(cfg.architecture) << "\n";
    os << "input_length = " << cfg.input_length << "\n";
    os << "input_channels = " << cfg.input_channels << "\n";
    os << "head = " << join(cfg.head) << "\n";
    if (cfg.architecture == Architecture::kClassicalCnn) {
        os << "conv_filters = " << cfg.cnn_filters << "\n";
        os << "conv_kernel = " << cfg.cnn_kernel << "\n";
        os << "conv_pool_window = " << cfg.cnn_pool_window << "\n";
        os << "conv_pool_stride = " << cfg.cnn_pool_stride << "\n";
        return os.str();
    }
    if (cfg.blocks.empty()) throw config_error("serialize_config: dense variant without blocks");
    const DenseBlockSpec& b0 = cfg.blocks.front();
    for (const auto& b : cfg.blocks)
        if (b.parts != b0.parts || b.part.layers != b0.part.layers ||
            b.part.ordering != b0.part.ordering)
            throw config_error("serialize_config: only uniform block lists are expressible");
    std::vector<int> filters, kernels;
    for (const auto& [f, k] : b0.part.layers) {
        filters.push_back(f);
        kernels.push_back(k);
    }
    os << "stem_filters = " << cfg.stem_filters << "\n";
    os << "stem_kernel = " << cfg.stem_kernel << "\n";
    os << "blocks = " << cfg.blocks.size() << "\n";
    os << "parts_per_block = " << b0.parts << "\n";
    os << "part_filters = " << join(filters) << "\n";
    os << "part_kernels = " << join(kernels) << "\n";
    os << "ordering = " << ordering_name(b0.part.ordering) << "\n";
    if (!cfg.transitions.empty()) {
        os << "compression = " << cfg.transitions.front().compression << "\n";
        os << "transition_pool_stride = " << cfg.transitions.front().pool_stride << "\n";
    }
    return os.str();
}

ModelConfig parse_config_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::vector<std::pair<std::string, std::pair<std::string, long>>> kvs;
    long row = 0;
    while (std::getline(is, line)) {
        ++row;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw parse_error("config: expected 'key = value'", row);
        kvs.push_back({trim(t.substr(0, eq)), {trim(t.substr(eq + 1)), row}});
    }
    // architecture decides the defaults everything else overrides
    Architecture arch = Architecture::kMsDensenet;
    bool arch_seen = false;
    for (const auto& [k, vr] : kvs)
        if (k == "architecture") {
            arch = architecture_from_name(vr.first);
            arch_seen = true;
        }
    if (!arch_seen) throw parse_error("config: missing 'architecture' key");
    ModelConfig cfg = default_config(arch);

    int n_blocks = static_cast<int>(cfg.blocks.size());
    int parts = cfg.blocks.empty() ? 6 : cfg.blocks.front().parts;
    std::vector<int> filters, kernels;
    if (!cfg.blocks.empty())
        for (const auto& [f, k] : cfg.blocks.front().part.layers) {
            filters.push_back(f);
            kernels.push_back(k);
        }
    Ordering ord = cfg.blocks.empty() ? Ordering::kBnReluConv : cfg.blocks.front().part.ordering;
    TransitionSpec tr = cfg.transitions.empty() ? TransitionSpec{} : cfg.transitions.front();

    for (const auto& [k, vr] : kvs) {
        const std::string& v = vr.first;
        const long r = vr.second;
        if (k == "architecture") continue;
        else if (k == "name") cfg.name = v;
        else if (k == "input_length") cfg.input_length = parse_int(v, r);
        else if (k == "input_channels") cfg.input_channels = parse_int(v, r);
        else if (k == "head") cfg.head = parse_int_list(v, r);
        else if (k == "stem_filters") cfg.stem_filters = parse_int(v, r);
        else if (k == "stem_kernel") cfg.stem_kernel = parse_int(v, r);
        else if (k == "blocks") n_blocks = parse_int(v, r);
        else if (k == "parts_per_block") parts = parse_int(v, r);
        else if (k == "part_filters") filters = parse_int_list(v, r);
        else if (k == "part_kernels") kernels = parse_int_list(v, r);
        else if (k == "ordering") ord = ordering_from_name(v);
        else if (k == "compression") tr.compression = parse_double(v, r);
        else if (k == "transition_pool_stride") tr.pool_stride = parse_int(v, r);
        else if (k == "conv_filters") cfg.cnn_filters = parse_int(v, r);
        else if (k == "conv_kernel") cfg.cnn_kernel = parse_int(v, r);
        else if (k == "conv_pool_window") cfg.cnn_pool_window = parse_int(v, r);
        else if (k == "conv_pool_stride") cfg.cnn_pool_stride = parse_int(v, r);
        else throw parse_error("config: unknown key '" + k + "'", r);
    }

    if (arch != Architecture::kClassicalCnn) {
        if (filters.size() != kernels.size())
            throw parse_error("config: part_filters and part_kernels must have equal length");
        DenseBlockSpec block;
        block.parts = parts;
        block.part.ordering = ord;
        for (std::size_t i = 0; i < filters.size(); ++i)
            block.part.layers.push_back({filters[i], kernels[i]});
        cfg.blocks.assign(static_cast<std::size_t>(n_blocks), block);
        cfg.transitions.assign(n_blocks > 0 ? static_cast<std::size_t>(n_blocks - 1) : 0, tr);
    } else {
        cfg.blocks.clear();
        cfg.transitions.clear();
    }
    validate_config(cfg);
    return cfg;
}

ModelConfig load_config_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw parse_error("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace etd
