import { serve } from "./app.js";
import { loadConfig } from "./config.js";

const configPath = process.argv[2];
const config = loadConfig(configPath);

serve(config)
  .then((server) => {
    const address = server.address();
    const port = typeof address === "object" && address !== null ? address.port : config.port;
    console.log(
      `bridge listening on :${port} ` +
        `(judge=${config.judge_model_id}, similarity=${config.similarity_model_id}, ` +
        `embed=${config.embed_model_id}, max_batch=${config.max_batch})`,
    );
  })
  .catch((err) => {
    console.error(`bridge failed to start: ${String(err)}`);
    process.exit(1);
  });
