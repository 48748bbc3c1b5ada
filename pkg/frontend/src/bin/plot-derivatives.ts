#!/usr/bin/env node
import { main } from "../cli";

process.exit(main("derivatives", process.argv.slice(2)));
