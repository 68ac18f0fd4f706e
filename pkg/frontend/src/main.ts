import { startApp } from './app.js';

startApp({ root: document.getElementById('app') as HTMLElement });
